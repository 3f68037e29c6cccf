"""Parameter estimation.

Fits run in log-parameter space so θ0, α and δ stay strictly positive:

* ``fit_v_space``: Nelder–Mead on the negative V-space log-likelihood (Beta or Gaussian proxy).
* ``fit_z_space_fixed_point``: the Lamperti-space fit; the data transform depends on the
  parameters, so the fit alternates between freezing the transformed data and maximizing.
* ``fit_delta`` / ``fit_complete``: the lead time δ of the initial transition, alone or jointly.
* ``compare_models``: the (model × provider × method) comparison table.
"""
import logging
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DataError, DegenerateDataError, DomainError, IntegrationError, JacobicastError
from .forecast import DEFAULT_EPSILON, SegmentSet
from .likelihood import (
    InformationCriteria,
    LogLikValue,
    information_criteria,
    loglik_complete,
    loglik_delta,
    loglik_v,
    loglik_v_gaussian,
    loglik_z,
    transition_batch,
)
from .model import ModelKind, ModelParams
from .moments import IntegratorConfig
from .optimizer import OptimizeResult, OptimizerConfig, golden_section, nelder_mead
from .schedules import ThetaSchedule, get_schedule

logger = logging.getLogger("jacobicast.calibrate")

THETA0_FLOOR = 1e-6
PRODUCT_FLOOR = 1e-6
DELTA_MAX_HOURS = 24.0
# log-parameter box the optimizers may explore
LOG_BOUNDS = (np.log(1e-8), np.log(1e4))


class FitMethod(str, Enum):
    V_BETA = "v_beta"
    V_GAUSS = "v_gauss"
    Z_FIXED_POINT = "z_fixed_point"
    COMPLETE = "complete"

    @classmethod
    def parse(cls, value) -> 'FitMethod':
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DomainError(f"unknown fit method {value!r}, expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class InitialGuess:
    theta0_star: float
    alpha_star: float
    delta_star: Optional[float] = None
    flags: Dict[str, int] = field(default_factory=dict, compare=False)

    @property
    def product(self) -> float:
        return self.theta0_star * self.alpha_star

    def to_dict(self) -> dict:
        out = {"theta0": self.theta0_star, "alpha": self.alpha_star, "product": self.product}
        if self.delta_star is not None:
            out["delta"] = self.delta_star
        return out


@dataclass(frozen=True)
class FixedPointConfig:
    max_iters: int = 25
    fp_tol: float = 1e-3
    damping: float = 0.5
    damping_iters: int = 2

    def __post_init__(self):
        if self.max_iters < 1 or self.fp_tol <= 0:
            raise DomainError("fixed-point iteration needs max_iters >= 1 and fp_tol > 0")
        if not 0.0 <= self.damping < 1.0:
            raise DomainError(f"damping must lie in [0, 1), got {self.damping!r}")


@dataclass
class FixedPointTrace:
    """Outer iterates θ_k and the relative steps between consecutive iterates.

    ``inner_residuals[k]`` is the relative distance between θ_k and the inner
    maximizer computed with the data transformed at θ_k.
    """
    iterates: List[Tuple[float, float]] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    inner_residuals: List[float] = field(default_factory=list)
    converged: bool = False

    def to_dict(self) -> dict:
        return {
            "iterates": [list(it) for it in self.iterates],
            "residuals": list(self.residuals),
            "inner_residuals": list(self.inner_residuals),
            "converged": self.converged,
        }


@dataclass
class DeltaEstimate:
    delta: float
    loglik: LogLikValue
    at_boundary: bool
    n_evals: int = 0


@dataclass
class CalibrationResult:
    params: ModelParams
    method: FitMethod
    loglik: LogLikValue
    criteria: InformationCriteria
    delta: Optional[float] = None
    provider: Optional[str] = None
    flags: Dict[str, int] = field(default_factory=dict)
    optimizer: Optional[OptimizeResult] = None
    trace: Optional[FixedPointTrace] = None
    initial: Optional[InitialGuess] = None

    @property
    def k(self) -> int:
        return self.criteria.k

    @property
    def product(self) -> float:
        return self.params.product

    def to_dict(self) -> dict:
        out = {
            "model": self.params.kind.number,
            "provider": self.provider,
            "method": self.method.value,
            "theta0": self.params.theta0,
            "alpha": self.params.alpha,
            "product": self.params.product,
            "schedule": self.params.rate_schedule.name,
            "loglik": self.loglik.value,
            "n": self.criteria.n,
            "k": self.criteria.k,
            "aic": self.criteria.aic,
            "bic": self.criteria.bic,
            "flags": dict(self.flags),
        }
        if self.delta is not None:
            out["delta"] = self.delta
        if self.initial is not None:
            out["initial_guess"] = self.initial.to_dict()
        if self.optimizer is not None:
            out["optimizer"] = self.optimizer.to_dict()
        if self.trace is not None:
            out["trace"] = self.trace.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> 'CalibrationResult':
        """Rebuild the parts needed downstream (parameters, δ, likelihood and criteria)"""
        try:
            kind = ModelKind.parse(data.get("model", 2))
            name = data.get("schedule")
            schedule = get_schedule(name) if name and kind is ModelKind.DERIVATIVE_TRACKING else None
            params = ModelParams(theta0=float(data["theta0"]), alpha=float(data["alpha"]), kind=kind, schedule=schedule)
            loglik = LogLikValue(float(data["loglik"]), int(data["n"]), dict(data.get("flags", {})))
            criteria = InformationCriteria(aic=float(data["aic"]), bic=float(data["bic"]), k=int(data["k"]), n=int(data["n"]))
            delta = data.get("delta")
            return cls(
                params=params,
                method=FitMethod.parse(data.get("method", FitMethod.V_BETA.value)),
                loglik=loglik,
                criteria=criteria,
                delta=float(delta) if delta is not None else None,
                provider=data.get("provider"),
                flags=dict(data.get("flags", {})),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed calibration record: {e}")


def _merge_flags(*parts: Dict[str, int]) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for part in parts:
        for key, count in part.items():
            if count:
                out[key] = out.get(key, 0) + int(count)
    return out


def _decode(x: np.ndarray) -> np.ndarray:
    return np.exp(np.clip(np.asarray(x, dtype=float), *LOG_BOUNDS))


def _make_params(kind: ModelKind, schedule: Optional[ThetaSchedule], theta0: float, alpha: float) -> ModelParams:
    return ModelParams(theta0=float(theta0), alpha=float(alpha), kind=kind, schedule=schedule)


def _safe(objective: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    """Objective wrapper: numerical failures become +inf so the simplex steps away"""
    def wrapped(x):
        try:
            return objective(x)
        except (DomainError, IntegrationError, FloatingPointError):
            return np.inf
    return wrapped


def _transition_arrays(data: SegmentSet, epsilon: float):
    batch = transition_batch(data, epsilon, 1)
    if batch is None:
        raise DegenerateDataError("no transitions available for an initial guess")
    return batch


def guess_theta0(data: SegmentSet, delta_obs: Optional[float] = None, epsilon: float = DEFAULT_EPSILON) -> float:
    """Least-squares decay rate Σ v_{i−1}(v_{i−1} − v_i) / (Δ Σ v_{i−1}²), floored at 1e-6"""
    batch = _transition_arrays(data, epsilon)
    delta_obs = data.delta_hours if delta_obs is None else float(delta_obs)
    denominator = delta_obs * float(np.sum(batch.v0 ** 2))
    if denominator <= 0:
        raise DegenerateDataError("all starting errors are zero, the decay rate is not identified")
    estimate = float(np.sum(batch.v0 * (batch.v0 - batch.v1))) / denominator
    if estimate < THETA0_FLOOR:
        logger.warning("theta0 guess %.3g is not positive, using %g", estimate, THETA0_FLOOR)
        return THETA0_FLOOR
    return estimate


def guess_product(data: SegmentSet, delta_obs: Optional[float] = None, epsilon: float = DEFAULT_EPSILON) -> float:
    """Quadratic-variation estimate of θ0α: Σ(v_i − v_{i−1})² / (2Δ Σ x_i(1 − x_i))"""
    batch = _transition_arrays(data, epsilon)
    delta_obs = data.delta_hours if delta_obs is None else float(delta_obs)
    denominator = 2.0 * delta_obs * float(np.sum(batch.x1 * (1.0 - batch.x1)))
    if denominator <= 0:
        raise DegenerateDataError("production never leaves {0, 1}, the diffusion scale is not identified")
    return float(np.sum((batch.v1 - batch.v0) ** 2)) / denominator


def initial_guess(data: SegmentSet, epsilon: float = DEFAULT_EPSILON, kind: ModelKind = ModelKind.DERIVATIVE_TRACKING,
                  schedule: Optional[ThetaSchedule] = None, with_delta: bool = False,
                  integrator: IntegratorConfig = IntegratorConfig()) -> InitialGuess:
    """(θ0*, α*) from the closed-form estimators and, optionally, δ* from fit_delta at that point"""
    flags: Dict[str, int] = {}
    try:
        theta0 = guess_theta0(data, epsilon=epsilon)
        if theta0 == THETA0_FLOOR:
            flags["theta0_clamped"] = 1
    except DegenerateDataError as e:
        logger.warning("%s; starting from theta0 = 1", e)
        theta0, flags["theta0_degenerate"] = 1.0, 1
    product = guess_product(data, epsilon=epsilon)
    if product < PRODUCT_FLOOR:
        product, flags["product_floor"] = PRODUCT_FLOOR, 1
    delta = None
    if with_delta:
        estimate = fit_delta(_make_params(kind, schedule, theta0, product / theta0), data, epsilon, integrator)
        delta = estimate.delta
        if estimate.at_boundary:
            flags["delta_boundary"] = 1
    return InitialGuess(theta0_star=theta0, alpha_star=product / theta0, delta_star=delta, flags=flags)


def _finish(params: ModelParams, method: FitMethod, loglik: LogLikValue, k: int, provider: Optional[str],
            flags: Dict[str, int], **extra) -> CalibrationResult:
    criteria = information_criteria(loglik, k)
    return CalibrationResult(params=params, method=method, loglik=loglik, criteria=criteria,
                             provider=provider, flags=_merge_flags(flags, loglik.flags), **extra)


def fit_v_space(data: SegmentSet, epsilon: float = DEFAULT_EPSILON, cfg: OptimizerConfig = OptimizerConfig(),
                kind: ModelKind = ModelKind.DERIVATIVE_TRACKING, proxy: str = "beta",
                integrator: IntegratorConfig = IntegratorConfig(), start: Optional[Tuple[float, float]] = None,
                schedule: Optional[ThetaSchedule] = None, provider: Optional[str] = None) -> CalibrationResult:
    """Maximize the V-space log-likelihood over (θ0, α).

    Args:
        data: training segments.
        proxy: "beta" for the Beta proxy, "gauss" for the Gaussian proxy.
        start: (θ0, α) starting point; defaults to the closed-form initial guess.

    Returns:
        CalibrationResult with k = 2.
    """
    kind = ModelKind.parse(kind)
    if proxy not in ("beta", "gauss"):
        raise DomainError(f"unknown proxy {proxy!r}")
    evaluate = loglik_v if proxy == "beta" else loglik_v_gaussian
    guess = None
    if start is None:
        guess = initial_guess(data, epsilon, kind, schedule)
        start = (guess.theta0_star, guess.alpha_star)

    def objective(x):
        theta0, alpha = _decode(x)
        return -evaluate(_make_params(kind, schedule, theta0, alpha), data, epsilon, integrator).value

    result = nelder_mead(_safe(objective), np.log(start), cfg)
    theta0, alpha = _decode(result.x)
    params = _make_params(kind, schedule, theta0, alpha)
    flags = dict(guess.flags) if guess else {}
    if not result.converged:
        logger.warning("V-space fit (%s, model %d) stopped after %d evaluations without converging",
                       proxy, kind.number, result.n_evals)
        flags["not_converged"] = 1
    method = FitMethod.V_BETA if proxy == "beta" else FitMethod.V_GAUSS
    return _finish(params, method, evaluate(params, data, epsilon, integrator), 2, provider, flags,
                   optimizer=result, initial=guess)


def _relative_step(new: np.ndarray, old: np.ndarray) -> float:
    """Componentwise relative change; bounds ‖new − old‖/‖old‖ from above"""
    return float(np.max(np.abs(new - old) / np.abs(old)))


def fit_z_space_fixed_point(data: SegmentSet, epsilon: float = DEFAULT_EPSILON, cfg: OptimizerConfig = OptimizerConfig(),
                            fp_cfg: FixedPointConfig = FixedPointConfig(),
                            kind: ModelKind = ModelKind.DERIVATIVE_TRACKING,
                            integrator: IntegratorConfig = IntegratorConfig(),
                            start: Optional[Tuple[float, float]] = None, schedule: Optional[ThetaSchedule] = None,
                            provider: Optional[str] = None) -> CalibrationResult:
    """Find θ* maximizing the Z-space likelihood of the data transformed at θ* itself.

    Each outer step freezes the data at θ_k, maximizes over θ, and moves to
    (1 − d) θ_inner + d θ_k, with d = damping for the first damping_iters
    steps and 0 afterwards. Stops once θ_inner is within fp_tol of θ_k.
    """
    kind = ModelKind.parse(kind)
    guess = None
    if start is None:
        guess = initial_guess(data, epsilon, kind, schedule)
        start = (guess.theta0_star, guess.alpha_star)
    current = np.asarray(start, dtype=float)
    trace = FixedPointTrace(iterates=[tuple(float(v) for v in current)])
    best, best_residual = current, np.inf
    last_inner: Optional[OptimizeResult] = None

    for iteration in range(fp_cfg.max_iters):
        frozen = _make_params(kind, schedule, *current)

        def objective(x, frozen=frozen):
            theta0, alpha = _decode(x)
            params = _make_params(kind, schedule, theta0, alpha)
            return -loglik_z(params, data, epsilon, integrator, transform_at=frozen).value

        last_inner = nelder_mead(_safe(objective), np.log(current), cfg)
        inner = _decode(last_inner.x)
        residual = _relative_step(inner, current)
        trace.inner_residuals.append(residual)
        logger.debug("fixed point %d: theta=(%.5g, %.5g) inner=(%.5g, %.5g) residual %.3g",
                     iteration, current[0], current[1], inner[0], inner[1], residual)
        if residual < best_residual:
            best, best_residual = current, residual
        if residual < fp_cfg.fp_tol:
            trace.converged = True
            break
        damping = fp_cfg.damping if iteration < fp_cfg.damping_iters else 0.0
        following = (1.0 - damping) * inner + damping * current
        trace.residuals.append(_relative_step(following, current))
        trace.iterates.append(tuple(float(v) for v in following))
        current = following

    flags = dict(guess.flags) if guess else {}
    if trace.converged:
        chosen = current
    else:
        logger.warning("fixed-point iteration did not converge in %d steps (best residual %.3g)",
                       fp_cfg.max_iters, best_residual)
        flags["fixed_point_not_converged"] = 1
        chosen = best
    params = _make_params(kind, schedule, *chosen)
    loglik = loglik_z(params, data, epsilon, integrator)
    return _finish(params, FitMethod.Z_FIXED_POINT, loglik, 2, provider, flags,
                   optimizer=last_inner, trace=trace, initial=guess)


def fit_delta(params: ModelParams, data: SegmentSet, epsilon: float = DEFAULT_EPSILON,
              integrator: IntegratorConfig = IntegratorConfig(),
              bounds: Optional[Tuple[float, float]] = None) -> DeltaEstimate:
    """Maximize the δ-likelihood over δ ∈ [Δ/10, 24 h] by golden-section search in log δ"""
    if not len(data):
        raise DataError("cannot fit delta on an empty segment set")
    lower, upper = bounds if bounds is not None else (data.delta_hours / 10.0, DELTA_MAX_HOURS)

    def objective(log_delta):
        return -loglik_delta(params, float(np.exp(log_delta)), data, epsilon, integrator).value

    result = golden_section(_safe(objective), np.log(lower), np.log(upper), tol=1e-4)
    delta = float(np.exp(result.x[0]))
    at_boundary = result.reason == "boundary"
    if at_boundary:
        logger.warning("delta estimate %.4g h sits on the search boundary [%.4g, %.4g]", delta, lower, upper)
    return DeltaEstimate(delta=delta, loglik=loglik_delta(params, delta, data, epsilon, integrator),
                         at_boundary=at_boundary, n_evals=result.n_evals)


def fit_complete(data: SegmentSet, epsilon: float = DEFAULT_EPSILON, cfg: OptimizerConfig = OptimizerConfig(),
                 kind: ModelKind = ModelKind.DERIVATIVE_TRACKING, integrator: IntegratorConfig = IntegratorConfig(),
                 schedule: Optional[ThetaSchedule] = None, provider: Optional[str] = None) -> CalibrationResult:
    """Joint (θ0, α, δ) fit of the complete likelihood, started from fit_v_space and fit_delta"""
    kind = ModelKind.parse(kind)
    base = fit_v_space(data, epsilon, cfg, kind, "beta", integrator, schedule=schedule, provider=provider)
    delta0 = fit_delta(base.params, data, epsilon, integrator)

    def objective(x):
        theta0, alpha, delta = _decode(x)
        params = _make_params(kind, schedule, theta0, alpha)
        return -loglik_complete(params, delta, data, epsilon, integrator).value

    start = np.log([base.params.theta0, base.params.alpha, delta0.delta])
    result = nelder_mead(_safe(objective), start, cfg)
    theta0, alpha, delta = _decode(result.x)
    params = _make_params(kind, schedule, theta0, alpha)
    flags = {}
    if not result.converged:
        logger.warning("complete-likelihood fit stopped after %d evaluations without converging", result.n_evals)
        flags["not_converged"] = 1
    guess = replace(base.initial, delta_star=delta0.delta) if base.initial else None
    return _finish(params, FitMethod.COMPLETE, loglik_complete(params, delta, data, epsilon, integrator), 3,
                   provider, flags, delta=float(delta), optimizer=result, initial=guess)


def calibrate(data: SegmentSet, method, kind=ModelKind.DERIVATIVE_TRACKING, epsilon: float = DEFAULT_EPSILON,
              cfg: OptimizerConfig = OptimizerConfig(), fp_cfg: FixedPointConfig = FixedPointConfig(),
              integrator: IntegratorConfig = IntegratorConfig(), schedule: Optional[ThetaSchedule] = None,
              provider: Optional[str] = None) -> CalibrationResult:
    """Dispatch to the fit named by `method`"""
    method = FitMethod.parse(method)
    if not len(data):
        raise DataError(f"{data.role} set is empty")
    if method is FitMethod.V_BETA:
        return fit_v_space(data, epsilon, cfg, kind, "beta", integrator, schedule=schedule, provider=provider)
    if method is FitMethod.V_GAUSS:
        return fit_v_space(data, epsilon, cfg, kind, "gauss", integrator, schedule=schedule, provider=provider)
    if method is FitMethod.Z_FIXED_POINT:
        return fit_z_space_fixed_point(data, epsilon, cfg, fp_cfg, kind, integrator, schedule=schedule, provider=provider)
    return fit_complete(data, epsilon, cfg, kind, integrator, schedule=schedule, provider=provider)


def evaluate_loglik(result: CalibrationResult, data: SegmentSet, epsilon: float = DEFAULT_EPSILON,
                    integrator: IntegratorConfig = IntegratorConfig()) -> LogLikValue:
    """Log-likelihood of fitted parameters on other data (e.g. the test set), same likelihood as the fit"""
    if result.method is FitMethod.V_BETA:
        return loglik_v(result.params, data, epsilon, integrator)
    if result.method is FitMethod.V_GAUSS:
        return loglik_v_gaussian(result.params, data, epsilon, integrator)
    if result.method is FitMethod.Z_FIXED_POINT:
        return loglik_z(result.params, data, epsilon, integrator)
    return loglik_complete(result.params, result.delta, data, epsilon, integrator)


@dataclass
class ComparisonRow:
    model: int
    provider: str
    method: str
    theta0: Optional[float] = None
    alpha: Optional[float] = None
    product: Optional[float] = None
    delta: Optional[float] = None
    loglik: Optional[float] = None
    n: Optional[int] = None
    k: Optional[int] = None
    aic: Optional[float] = None
    bic: Optional[float] = None
    flags: Dict[str, int] = field(default_factory=dict)
    error: Optional[str] = None

    @classmethod
    def from_result(cls, result: CalibrationResult) -> 'ComparisonRow':
        return cls(
            model=result.params.kind.number, provider=result.provider, method=result.method.value,
            theta0=result.params.theta0, alpha=result.params.alpha, product=result.product, delta=result.delta,
            loglik=result.loglik.value, n=result.criteria.n, k=result.criteria.k,
            aic=result.criteria.aic, bic=result.criteria.bic, flags=dict(result.flags),
        )

    def sort_key(self):
        if self.error is not None or self.aic is None or not np.isfinite(self.aic):
            return (1, np.inf, np.inf, np.inf, self.provider, self.model, self.method)
        return (0, self.aic, self.bic, self.product, self.provider, self.model, self.method)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ComparisonTable:
    rows: List[ComparisonRow]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.to_dict() for r in self.rows])
        if "flags" in frame:
            frame["flags"] = [";".join(f"{k}={v}" for k, v in sorted(f.items())) for f in frame["flags"]]
        return frame

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}


def compare_models(data: SegmentSet, providers: Optional[Sequence[str]] = None, models: Sequence = (1, 2),
                   methods: Sequence = (FitMethod.V_BETA, FitMethod.V_GAUSS), epsilon: float = DEFAULT_EPSILON,
                   cfg: OptimizerConfig = OptimizerConfig(), fp_cfg: FixedPointConfig = FixedPointConfig(),
                   integrator: IntegratorConfig = IntegratorConfig(), threads: int = 1) -> ComparisonTable:
    """Fit every (model, provider, method) cell and rank the rows by AIC, then BIC, then θ0α.

    Failed cells stay in the table with their error message, after all successful rows.
    """
    providers = list(providers) if providers else data.providers
    if not providers:
        raise DataError("no providers to compare")
    subsets = {p: data.for_provider(p) for p in providers}
    cells = [(ModelKind.parse(m), p, FitMethod.parse(meth)) for p in providers for m in models for meth in methods]

    def run(cell) -> ComparisonRow:
        kind, provider, method = cell
        try:
            result = calibrate(subsets[provider], method, kind, epsilon, cfg, fp_cfg, integrator, provider=provider)
            return ComparisonRow.from_result(result)
        except JacobicastError as e:
            logger.error("comparison cell (model %d, %s, %s) failed: %s", kind.number, provider, method.value, e)
            logger.debug(traceback.format_exc())
            return ComparisonRow(model=kind.number, provider=provider, method=method.value, error=str(e))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, cells))
    else:
        rows = [run(c) for c in cells]
    return ComparisonTable(rows=sorted(rows, key=ComparisonRow.sort_key))


def loglik_surface(data: SegmentSet, theta0_grid: Iterable[float], alpha_grid: Iterable[float],
                   epsilon: float = DEFAULT_EPSILON, kind: ModelKind = ModelKind.DERIVATIVE_TRACKING,
                   integrator: IntegratorConfig = IntegratorConfig(), proxy: str = "beta") -> pd.DataFrame:
    """Negative V-space log-likelihood on a (θ0, α) grid; columns theta0, alpha, product, neg_loglik"""
    evaluate = loglik_v if proxy == "beta" else loglik_v_gaussian
    kind = ModelKind.parse(kind)
    records = []
    for theta0 in theta0_grid:
        for alpha in alpha_grid:
            params = ModelParams(theta0=float(theta0), alpha=float(alpha), kind=kind)
            records.append({
                "theta0": params.theta0,
                "alpha": params.alpha,
                "product": params.product,
                "neg_loglik": -evaluate(params, data, epsilon, integrator).value,
            })
    return pd.DataFrame.from_records(records, columns=["theta0", "alpha", "product", "neg_loglik"])


def delta_surface(data: SegmentSet, params_grid: Iterable[Tuple[float, float]], epsilon: float = DEFAULT_EPSILON,
                  kind: ModelKind = ModelKind.DERIVATIVE_TRACKING,
                  integrator: IntegratorConfig = IntegratorConfig()) -> pd.DataFrame:
    """fit_delta over (θ0, θ0α) pairs; columns theta0, alpha, product, delta, at_boundary"""
    kind = ModelKind.parse(kind)
    records = []
    for theta0, product in params_grid:
        params = ModelParams(theta0=float(theta0), alpha=float(product) / float(theta0), kind=kind)
        estimate = fit_delta(params, data, epsilon, integrator)
        records.append({
            "theta0": params.theta0,
            "alpha": params.alpha,
            "product": params.product,
            "delta": estimate.delta,
            "at_boundary": estimate.at_boundary,
        })
    return pd.DataFrame.from_records(records, columns=["theta0", "alpha", "product", "delta", "at_boundary"])


def multi_start(data: SegmentSet, starts: Sequence[Tuple[float, float]], epsilon: float = DEFAULT_EPSILON,
                cfg: OptimizerConfig = OptimizerConfig(), kind: ModelKind = ModelKind.DERIVATIVE_TRACKING,
                integrator: IntegratorConfig = IntegratorConfig(), threads: int = 1) -> List[CalibrationResult]:
    """fit_v_space from several starting points, results in the order of `starts`"""
    def run(start):
        return fit_v_space(data, epsilon, cfg, kind, "beta", integrator, start=tuple(start))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, starts))
    return [run(s) for s in starts]
