__version__ = "0.3.0"

from .calibrate import (
    CalibrationResult,
    ComparisonTable,
    FitMethod,
    FixedPointConfig,
    InitialGuess,
    calibrate,
    compare_models,
    delta_surface,
    fit_complete,
    fit_delta,
    fit_v_space,
    fit_z_space_fixed_point,
    guess_product,
    guess_theta0,
    initial_guess,
    loglik_surface,
    multi_start,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    DomainError,
    InfeasibleMomentsError,
    IntegrationError,
    JacobicastError,
    SingularityError,
)
from .forecast import (
    ForecastCurve,
    Segment,
    SegmentSet,
    build_curve,
    compute_errors,
    detect_curtailment,
    extrapolate_backward,
    read_raw_csv,
    read_segments,
    segment_series,
    split_train_test,
    truncate_forecast,
)
from .likelihood import (
    BetaShapes,
    LogLikValue,
    beta_shapes_from_moments,
    beta_transition_logpdf,
    information_criteria,
    loglik_complete,
    loglik_delta,
    loglik_v,
    loglik_v_gaussian,
    loglik_z,
)
from .model import (
    ExtendedParams,
    ModelKind,
    ModelParams,
    ValidityReport,
    check_conditions,
    drift_v,
    drift_z,
    drift_z_prime,
    lamperti_forward,
    lamperti_inverse,
    theta_t,
)
from .moments import IntegratorConfig, MomentStateV, MomentStateZ, integrate_v_moments, integrate_z_moments
from .optimizer import OptimizerConfig, golden_section, nelder_mead
from .schedules import ConstantSchedule, ForecastBoundSchedule, ThetaSchedule, get_schedule
from .settings import Settings, load_settings
from .simulate import (
    BandSet,
    PathBundle,
    SimConfig,
    empirical_bands,
    quadratic_variation,
    simulate_paths,
    transition_histogram,
)
from .synthetic import random_forecast_knots, simulate_segment_set

__all__ = [
    'ModelParams',
    'ModelKind',
    'ExtendedParams',
    'ValidityReport',
    'theta_t',
    'drift_v',
    'drift_z',
    'drift_z_prime',
    'lamperti_forward',
    'lamperti_inverse',
    'check_conditions',
    'ThetaSchedule',
    'ForecastBoundSchedule',
    'ConstantSchedule',
    'get_schedule',
    'ForecastCurve',
    'Segment',
    'SegmentSet',
    'read_raw_csv',
    'read_segments',
    'segment_series',
    'truncate_forecast',
    'build_curve',
    'compute_errors',
    'detect_curtailment',
    'split_train_test',
    'extrapolate_backward',
    'IntegratorConfig',
    'MomentStateV',
    'MomentStateZ',
    'integrate_v_moments',
    'integrate_z_moments',
    'BetaShapes',
    'LogLikValue',
    'beta_shapes_from_moments',
    'beta_transition_logpdf',
    'loglik_v',
    'loglik_v_gaussian',
    'loglik_z',
    'loglik_delta',
    'loglik_complete',
    'information_criteria',
    'OptimizerConfig',
    'nelder_mead',
    'golden_section',
    'FitMethod',
    'FixedPointConfig',
    'InitialGuess',
    'CalibrationResult',
    'ComparisonTable',
    'guess_theta0',
    'guess_product',
    'initial_guess',
    'fit_v_space',
    'fit_z_space_fixed_point',
    'fit_delta',
    'fit_complete',
    'calibrate',
    'compare_models',
    'loglik_surface',
    'delta_surface',
    'multi_start',
    'SimConfig',
    'PathBundle',
    'BandSet',
    'simulate_paths',
    'empirical_bands',
    'quadratic_variation',
    'transition_histogram',
    'random_forecast_knots',
    'simulate_segment_set',
    'Settings',
    'load_settings',
    'JacobicastError',
    'DomainError',
    'SingularityError',
    'DataError',
    'DegenerateDataError',
    'InfeasibleMomentsError',
    'IntegrationError',
    'ConfigError',
]
