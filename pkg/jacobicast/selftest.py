"""Property checks on built-in synthetic fixtures.

``run_selftest()`` runs every check at a reduced size and returns one
``CheckResult`` per property; ``full=True`` uses the acceptance sizes
(path counts, replications) and takes several minutes.
"""
import logging
import time
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

from .calibrate import FitMethod, calibrate, fit_delta, fit_v_space, fit_z_space_fixed_point, multi_start
from .forecast import DEFAULT_EPSILON, ForecastCurve, truncate_forecast
from .likelihood import beta_shapes_from_moments, beta_transition_logpdf
from .model import (
    ModelKind,
    ModelParams,
    drift_z,
    drift_z_prime,
    drift_z_unsubstituted,
    lamperti_forward,
    lamperti_inverse,
    theta_t,
)
from .moments import IntegratorConfig, integrate_v_moments, integrate_z_moments
from .simulate import SimConfig, derive_seed, empirical_bands, lamperti_paths, plain_mean, simulate_paths
from .synthetic import random_forecast_knots, simulate_segment_set

logger = logging.getLogger("jacobicast.selftest")

REFERENCE = ModelParams(theta0=1.9, alpha=0.05)
DELTA = 1.0 / 6.0
# allowance for the Euler discretization bias of the path mean, on top of 3 standard errors
MEAN_SLACK = 2e-3


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_params(rng: np.random.Generator, kind: ModelKind = ModelKind.DERIVATIVE_TRACKING) -> ModelParams:
    return ModelParams(theta0=rng.uniform(0.5, 5.0), alpha=rng.uniform(0.01, 0.5), kind=kind)


def _hourly_curve(n_hours: int, seed: int, epsilon: float = DEFAULT_EPSILON) -> ForecastCurve:
    knots = random_forecast_knots(n_hours, seed)
    return ForecastCurve(np.arange(n_hours + 1, dtype=float), np.asarray(truncate_forecast(knots, epsilon)), epsilon)


def check_lamperti_round_trip(rng: np.random.Generator, full: bool) -> str:
    worst = 0.0
    for _ in range(100):
        params = _random_params(rng)
        p = rng.uniform(DEFAULT_EPSILON, 1.0 - DEFAULT_EPSILON, 100)
        v = rng.uniform(0.0, 1.0, 100) - p
        back = lamperti_inverse(lamperti_forward(v, p, params), p, params)
        worst = max(worst, float(np.max(np.abs(back - v))))
    assert worst <= 1e-12, f"max round-trip error {worst:.3g}"
    return f"max error {worst:.2g} over 10^4 tuples"


def check_drift_forms(rng: np.random.Generator, full: bool) -> str:
    worst_form = worst_prime = 0.0
    for _ in range(100):
        params = _random_params(rng)
        p = rng.uniform(0.05, 0.95, 10)
        p_dot = rng.uniform(-0.5, 0.5, 10)
        x = rng.uniform(0.05, 0.95, 10)
        z = np.asarray(lamperti_forward(x - p, p, params))
        a = np.asarray(drift_z(z, p, p_dot, params))
        b = np.asarray(drift_z_unsubstituted(z, p, p_dot, params))
        worst_form = max(worst_form, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
        h = 1e-6
        fd = (np.asarray(drift_z(z + h, p, p_dot, params)) - np.asarray(drift_z(z - h, p, p_dot, params))) / (2 * h)
        exact = np.asarray(drift_z_prime(z, p, p_dot, params))
        worst_prime = max(worst_prime, float(np.max(np.abs(exact - fd) / np.maximum(1.0, np.abs(exact)))))
    assert worst_form <= 1e-10, f"drift forms differ by {worst_form:.3g}"
    assert worst_prime <= 1e-5, f"drift derivative off by {worst_prime:.3g}"
    return f"forms {worst_form:.2g}, derivative {worst_prime:.2g}"


def check_beta_matching(rng: np.random.Generator, full: bool) -> str:
    n = 1000 if full else 200
    c = 1.0 - DEFAULT_EPSILON
    worst_moment = worst_mass = 0.0
    integrated = 0
    for _ in range(n):
        mu = rng.uniform(-0.8, 0.8) * c
        sigma2 = rng.uniform(0.01, 0.5) * (c * c - mu * mu)
        shapes = beta_shapes_from_moments(mu, sigma2, DEFAULT_EPSILON)
        worst_moment = max(worst_moment, abs(shapes.mean - mu), abs(shapes.variance - sigma2) / sigma2)
        if shapes.xi1 >= 1.0 and shapes.xi2 >= 1.0:
            mass, _ = quad(lambda v: np.exp(beta_transition_logpdf(v, shapes)), -c + 1e-14, c - 1e-14,
                           epsabs=1e-12, epsrel=1e-12, limit=200)
            worst_mass = max(worst_mass, abs(mass - 1.0))
            integrated += 1
    assert worst_moment <= 1e-10, f"matched moments off by {worst_moment:.3g}"
    assert worst_mass <= 1e-8, f"density mass off by {worst_mass:.3g}"
    return f"moments {worst_moment:.2g}, mass {worst_mass:.2g} ({integrated} integrated)"


def _constant_moments(v0: float, p: float, params: ModelParams, dt: float):
    theta = float(theta_t(params, p, 0.0))
    s = 2.0 * params.product
    system = np.array([
        [-theta, 0.0, 0.0],
        [s * (1.0 - 2.0 * p), -2.0 * theta - s, s * p * (1.0 - p)],
        [0.0, 0.0, 0.0],
    ])
    return expm(system * dt) @ np.array([v0, v0 * v0, 1.0])


def check_moment_closed_form(rng: np.random.Generator, full: bool) -> str:
    worst = 0.0
    cfg = IntegratorConfig(substeps=50)
    for _ in range(20):
        params = _random_params(rng)
        p = rng.uniform(0.1, 0.9)
        v0 = rng.uniform(0.0, 1.0) - p
        curve = ForecastCurve(np.array([0.0, 1.0]), np.array([p, p]), DEFAULT_EPSILON)
        state = integrate_v_moments(v0, (0.0, DELTA), curve, params, cfg)
        m1, m2, _ = _constant_moments(v0, p, params, DELTA)
        worst = max(worst, abs(state.m1 - m1), abs(state.m2 - m2))
    assert worst <= 1e-8, f"moment ODE off the closed form by {worst:.3g}"
    return f"max deviation {worst:.2g}"


def check_moments_against_paths(rng: np.random.Generator, full: bool) -> str:
    n_paths = 100_000 if full else 20_000
    n_cases = 20 if full else 5
    worst = 0.0
    for case in range(n_cases):
        params = ModelParams(theta0=rng.uniform(1.0, 3.0), alpha=rng.uniform(0.03, 0.2))
        curve = _hourly_curve(1, derive_seed(int(rng.integers(2 ** 31)), case))
        x0 = float(np.clip(curve.value(0.0) + rng.uniform(-0.1, 0.1), 0.05, 0.95))
        v0 = x0 - float(curve.value(0.0))
        times = np.array([0.0, DELTA])
        bundle = simulate_paths(params, curve, times, SimConfig(n_paths=n_paths, substeps=200,
                                                                seed=int(rng.integers(2 ** 31))), v0=v0)
        errors = bundle.errors[:, -1]
        state = integrate_v_moments(v0, (0.0, DELTA), curve, params, IntegratorConfig(substeps=50))
        se_mean = errors.std() / np.sqrt(errors.size)
        se_m2 = (errors ** 2).std() / np.sqrt(errors.size)
        z = max(abs(errors.mean() - state.m1) / se_mean, abs(np.mean(errors ** 2) - state.m2) / se_m2)
        worst = max(worst, float(z))
    assert worst <= 3.0, f"moment ODE {worst:.2f} standard errors from Monte Carlo"
    return f"worst {worst:.2f} standard errors over {n_cases} transitions"


def check_z_moments_against_paths(rng: np.random.Generator, full: bool) -> str:
    n_paths = 100_000 if full else 20_000
    n_cases = 20 if full else 5
    worst = 0.0
    for case in range(n_cases):
        # the linearization is only checked where the drift is close to linear: mid-range p, x near p
        params = ModelParams(theta0=rng.uniform(1.0, 2.5), alpha=rng.uniform(0.03, 0.08))
        p0 = rng.uniform(0.42, 0.58)
        curve = ForecastCurve(np.array([0.0, 1.0]), np.array([p0, p0 + rng.uniform(-0.1, 0.1)]), DEFAULT_EPSILON)
        x0 = p0 + rng.uniform(-0.03, 0.03)
        bundle = simulate_paths(params, curve, np.array([0.0, DELTA]),
                                SimConfig(n_paths=n_paths, substeps=200, seed=int(rng.integers(2 ** 31))), v0=x0 - p0)
        z = lamperti_paths(bundle, params)[:, -1]
        z0 = float(lamperti_forward(x0 - p0, p0, params))
        state = integrate_z_moments(z0, (0.0, DELTA), curve, params, IntegratorConfig(substeps=50))
        centered = (z - z.mean()) ** 2
        se_mean = z.std() / np.sqrt(z.size)
        se_var = centered.std() / np.sqrt(z.size)
        score = max(abs(z.mean() - state.mu) / se_mean, abs(centered.mean() - state.var) / se_var)
        worst = max(worst, float(score))
    assert worst <= 3.0, f"linearized Z moments {worst:.2f} standard errors from Monte Carlo"
    return f"worst {worst:.2f} standard errors over {n_cases} transitions"


def check_mean_tracking(rng: np.random.Generator, full: bool) -> str:
    n_paths = 10_000 if full else 4000
    times = np.arange(145) * DELTA
    curve = _hourly_curve(24, int(rng.integers(2 ** 31)))
    bundle = simulate_paths(REFERENCE, curve, times, SimConfig(n_paths=n_paths, seed=int(rng.integers(2 ** 31))))
    errors = bundle.errors
    se = errors.std(axis=0) / np.sqrt(errors.shape[0])
    excess = np.abs(errors.mean(axis=0)) - (3.0 * se + MEAN_SLACK)
    assert np.all(excess <= 0), f"model 2 mean leaves p_t at {int(np.count_nonzero(excess > 0))} points"

    ramp = ForecastCurve(np.array([0.0, 6.0]), np.array([0.3, 0.7]), DEFAULT_EPSILON)
    plain = ModelParams(theta0=2.0, alpha=0.05, kind=ModelKind.PLAIN)
    short = times[times <= 6.0]
    lagged = simulate_paths(plain, ramp, short, SimConfig(n_paths=n_paths, seed=int(rng.integers(2 ** 31))))
    expected = plain_mean(ramp, plain.theta0, short)
    mean = lagged.valid_paths.mean(axis=0)
    se = lagged.valid_paths.std(axis=0) / np.sqrt(lagged.valid_paths.shape[0])
    gap = np.abs(mean - expected) - (3.0 * se + MEAN_SLACK)
    assert np.all(gap <= 0), f"model 1 mean misses the lagged closed form at {int(np.count_nonzero(gap > 0))} points"
    return (f"{n_paths} paths, tolerance 3 SE + slack {MEAN_SLACK:g}, "
            f"max model 1 lag {float(np.max(np.abs(expected - ramp.value(short)))):.3g}")


def check_boundedness(rng: np.random.Generator, full: bool) -> str:
    n_paths = 100_000 if full else 5000
    times = np.arange(145) * DELTA
    curve = _hourly_curve(24, int(rng.integers(2 ** 31)))
    bundle = simulate_paths(REFERENCE, curve, times, SimConfig(n_paths=n_paths, seed=int(rng.integers(2 ** 31))))
    paths = bundle.valid_paths
    assert not bundle.aborted.any(), f"{int(bundle.aborted.sum())} paths aborted"
    assert paths.min() >= 0.0 and paths.max() <= 1.0, "a path left [0, 1]"
    return f"{n_paths} x 144 steps, range [{paths.min():.3g}, {paths.max():.3g}]"


def _fixture(seed: int, n_segments: int, delta: Optional[float] = None):
    return simulate_segment_set(REFERENCE, n_segments, seed=seed, delta=delta)


def check_parameter_recovery(rng: np.random.Generator, full: bool) -> str:
    replications = 10 if full else 1
    n_segments = 80 if full else 40
    target = REFERENCE.product
    hits = 0
    gaps = []
    for r in range(replications):
        data = _fixture(int(rng.integers(2 ** 31)), n_segments)
        v_fit = fit_v_space(data)
        z_fit = fit_z_space_fixed_point(data)
        within = all(abs(f.product - target) <= 0.1 * target for f in (v_fit, z_fit))
        gap = abs(v_fit.product - z_fit.product) / max(v_fit.product, z_fit.product)
        gaps.append(gap)
        hits += within and gap <= 0.25
        logger.info("recovery %d: v-space %.4g, fixed point %.4g", r, v_fit.product, z_fit.product)
    needed = 8 if full else 1
    assert hits >= needed, f"recovered within 10% in {hits}/{replications} replications"
    return f"{hits}/{replications} replications, max method gap {max(gaps):.1%}"


def check_ridge(rng: np.random.Generator, full: bool) -> str:
    data = _fixture(int(rng.integers(2 ** 31)), 80 if full else 40)
    starts = [(0.5, 0.2), (1.0, 0.1), (2.0, 0.05), (4.0, 0.025), (8.0, 0.0125)]
    fits = multi_start(data, starts)
    products = np.array([f.product for f in fits])
    theta0 = np.array([f.params.theta0 for f in fits])
    spread = products.max() / products.min() - 1.0
    ratio = (theta0.std() / theta0.mean()) / max(products.std() / products.mean(), 1e-12)
    assert spread <= 0.02, f"products spread {spread:.1%}"
    assert ratio > 3.0, f"theta0 varies only {ratio:.2f}x as much as the product"
    return f"product spread {spread:.2%}, variation ratio {ratio:.1f}"


def check_model_selection(rng: np.random.Generator, full: bool) -> str:
    replications = 10 if full else 1
    ordered = 0
    for _ in range(replications):
        data = _fixture(int(rng.integers(2 ** 31)), 80 if full else 40)
        m2 = calibrate(data, FitMethod.V_BETA, ModelKind.DERIVATIVE_TRACKING).criteria.aic
        m1 = calibrate(data, FitMethod.V_BETA, ModelKind.PLAIN).criteria.aic
        m1_gauss = calibrate(data, FitMethod.V_GAUSS, ModelKind.PLAIN).criteria.aic
        ordered += m2 < m1 < m1_gauss
    needed = 9 if full else 1
    assert ordered >= needed, f"AIC ordering held in {ordered}/{replications} replications"
    return f"ordering held in {ordered}/{replications}"


def check_delta_behavior(rng: np.random.Generator, full: bool) -> str:
    data = _fixture(int(rng.integers(2 ** 31)), 40 if full else 20, delta=0.1)
    by_product = [fit_delta(ModelParams(theta0=1.9, alpha=prod / 1.9), data).delta for prod in (0.05, 0.095, 0.19)]
    by_theta0 = [fit_delta(ModelParams(theta0=t, alpha=0.095 / t), data).delta for t in (1.0, 1.9, 3.8)]
    assert by_product[0] > by_product[1] > by_product[2], f"delta not decreasing in the product: {by_product}"
    assert by_theta0[0] < by_theta0[1] < by_theta0[2], f"delta not increasing in theta0: {by_theta0}"
    return "by product " + ", ".join(f"{d:.3g}" for d in by_product) + "; by theta0 " + ", ".join(
        f"{d:.3g}" for d in by_theta0)


def check_band_coverage(rng: np.random.Generator, full: bool) -> str:
    times = np.arange(145) * DELTA
    curve = _hourly_curve(24, int(rng.integers(2 ** 31)))
    ensemble = simulate_paths(REFERENCE, curve, times, SimConfig(n_paths=5000 if full else 2000,
                                                                 seed=int(rng.integers(2 ** 31))))
    truths = simulate_paths(REFERENCE, curve, times, SimConfig(n_paths=200, seed=int(rng.integers(2 ** 31))))
    bands = empirical_bands(ensemble, [0.9])
    lower, upper = bands.band(0.9)
    # the common start point is inside every band
    inside = (truths.valid_paths[:, 1:] >= lower[1:]) & (truths.valid_paths[:, 1:] <= upper[1:])
    coverage = float(inside.mean())
    assert abs(coverage - 0.9) <= 0.05, f"90% band covered {coverage:.1%}"
    return f"coverage {coverage:.1%}"


def check_reproducibility(rng: np.random.Generator, full: bool) -> str:
    times = np.arange(25) * DELTA
    curve = _hourly_curve(4, int(rng.integers(2 ** 31)))
    seed = int(rng.integers(2 ** 31))
    single = simulate_paths(REFERENCE, curve, times, SimConfig(n_paths=2500, seed=seed, threads=1))
    pooled = simulate_paths(REFERENCE, curve, times, SimConfig(n_paths=2500, seed=seed, threads=4))
    assert np.array_equal(single.paths, pooled.paths, equal_nan=True), "thread count changed the paths"
    return "1 and 4 threads agree bit for bit"


CHECKS: Dict[str, Callable[[np.random.Generator, bool], str]] = {
    "lamperti_round_trip": check_lamperti_round_trip,
    "drift_forms": check_drift_forms,
    "beta_matching": check_beta_matching,
    "moment_closed_form": check_moment_closed_form,
    "moments_vs_paths": check_moments_against_paths,
    "z_moments_vs_paths": check_z_moments_against_paths,
    "mean_tracking": check_mean_tracking,
    "boundedness": check_boundedness,
    "parameter_recovery": check_parameter_recovery,
    "ridge": check_ridge,
    "model_selection": check_model_selection,
    "delta_behavior": check_delta_behavior,
    "band_coverage": check_band_coverage,
    "reproducibility": check_reproducibility,
}


def run_selftest(full: bool = False, seed: int = 0, only: Optional[Sequence[str]] = None) -> List[CheckResult]:
    names = list(only) if only else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        from .errors import ConfigError
        raise ConfigError(f"unknown selftest checks {unknown}, expected some of {sorted(CHECKS)}")
    results = []
    for i, name in enumerate(names):
        rng = np.random.default_rng(derive_seed(seed, i))
        started = time.perf_counter()
        try:
            detail = CHECKS[name](rng, full)
            passed = True
        except AssertionError as e:
            detail, passed = str(e), False
        except Exception as e:
            logger.debug("check %s raised", name, exc_info=True)
            detail, passed = f"{type(e).__name__}: {e}", False
        results.append(CheckResult(name, passed, detail, time.perf_counter() - started))
        logger.info("%s %s (%.1fs)", name, "passed" if passed else "FAILED", results[-1].seconds)
    return results


def print_report(results: Sequence[CheckResult]) -> None:
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"[Jacobicast] {'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.seconds:7.1f}s  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"[Jacobicast] {len(results) - failed}/{len(results)} checks passed")
