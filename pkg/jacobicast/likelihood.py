"""Approximate log-likelihoods built from moment-matched transition densities.

* V-space, Beta proxy: the two moments of V are matched by a Beta on [−1+ε, 1−ε].
* V-space, Gaussian proxy: same moments, normal density.
* Z-space: linearized mean and variance of the Lamperti variable, normal density.
* δ-likelihood: the transition from a zero error δ before the first sample.

Every log-likelihood is a sum over transitions evaluated for all segments at
once; the reduction is a single ``np.sum`` over an array in segment order.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import betaln, xlogy
from scipy.stats import norm

from .errors import DegenerateDataError, DomainError, InfeasibleMomentsError
from .forecast import DEFAULT_EPSILON, SegmentSet, check_epsilon, extrapolate_backward
from .model import ModelParams, clamp_interior, lamperti_forward, pull_inside
from .moments import (
    IntegratorConfig,
    TransitionGrid,
    integrate_v_moments_batch,
    integrate_z_moments_batch,
)

logger = logging.getLogger("jacobicast.likelihood")

VARIANCE_FLOOR = 1e-10
FEASIBILITY_SHRINK = 0.999
SUPPORT_INSET = 1e-12


@dataclass(frozen=True)
class BetaShapes:
    """Beta law rescaled onto [−1+ε, 1−ε]"""
    xi1: float
    xi2: float
    epsilon: float

    @property
    def half_width(self) -> float:
        return 1.0 - self.epsilon

    @property
    def support(self) -> Tuple[float, float]:
        return -self.half_width, self.half_width

    @property
    def mean(self) -> float:
        c = self.half_width
        return -c + 2.0 * c * self.xi1 / (self.xi1 + self.xi2)

    @property
    def variance(self) -> float:
        total = self.xi1 + self.xi2
        return (2.0 * self.half_width) ** 2 * self.xi1 * self.xi2 / (total ** 2 * (total + 1.0))


@dataclass
class LogLikValue:
    value: float
    n_transitions: int
    flags: Dict[str, int] = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))

    @property
    def per_transition(self) -> float:
        return self.value / self.n_transitions if self.n_transitions else 0.0

    def __add__(self, other: 'LogLikValue') -> 'LogLikValue':
        flags = dict(self.flags)
        for key, count in other.flags.items():
            flags[key] = flags.get(key, 0) + count
        return LogLikValue(self.value + other.value, self.n_transitions + other.n_transitions, flags)

    def to_dict(self) -> dict:
        return {"loglik": self.value, "n": self.n_transitions, "flags": dict(self.flags)}


@dataclass(frozen=True)
class InformationCriteria:
    aic: float
    bic: float
    k: int
    n: int


@dataclass(frozen=True)
class TransitionBatch:
    """Every (x_{i−1}, x_i) pair of a segment set with its integration grid"""
    grid: TransitionGrid
    v0: np.ndarray
    v1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray

    @property
    def n(self) -> int:
        return len(self.v0)

    @property
    def x0(self) -> np.ndarray:
        return self.v0 + self.p0

    @property
    def x1(self) -> np.ndarray:
        return self.v1 + self.p1


def transition_batch(data: SegmentSet, epsilon: float, substeps: int) -> Optional[TransitionBatch]:
    """All transitions of the set, or None when there are none; cached on the set"""
    epsilon = check_epsilon(epsilon)

    def build():
        prepared = [s for s in data.prepared(epsilon) if s.segment.n_transitions]
        if not prepared:
            return None
        pieces = [(s.curve, s.times[:-1], s.times[1:]) for s in prepared]
        return TransitionBatch(
            grid=TransitionGrid.build(pieces, substeps),
            v0=np.concatenate([s.errors[:-1] for s in prepared]),
            v1=np.concatenate([s.errors[1:] for s in prepared]),
            p0=np.concatenate([s.curve.value(s.times[:-1]) for s in prepared]),
            p1=np.concatenate([s.curve.value(s.times[1:]) for s in prepared]),
        )

    return data.memo(("transitions", epsilon, int(substeps)), build)


def _shapes_arrays(mu: np.ndarray, sigma2: np.ndarray, epsilon: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Vectorized shape matching with infeasible pairs pulled back inside the feasible set"""
    c = 1.0 - epsilon
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    edge = c * (1.0 - 1e-9)
    mu_fixed = np.clip(mu, -edge, edge)
    bound = c * c - mu_fixed ** 2
    sigma2_fixed = np.minimum(np.maximum(sigma2, VARIANCE_FLOOR), FEASIBILITY_SHRINK * bound)
    adjusted = int(np.count_nonzero((mu_fixed != mu) | (sigma2_fixed != sigma2)))
    common = (mu_fixed ** 2 + sigma2_fixed - c * c) / (2.0 * c * sigma2_fixed)
    return -(mu_fixed + c) * common, (mu_fixed - c) * common, adjusted


def beta_shapes_from_moments(mu: float, sigma2: float, epsilon: float) -> BetaShapes:
    """Shapes of the Beta on [−1+ε, 1−ε] with mean `mu` and variance `sigma2`.

    Raises:
        InfeasibleMomentsError: if no such Beta exists.
    """
    epsilon = check_epsilon(epsilon) if epsilon else 0.0
    c = 1.0 - epsilon
    if not (np.isfinite(mu) and np.isfinite(sigma2)) or sigma2 <= 0 or not -c < mu < c or sigma2 >= c * c - mu * mu:
        raise InfeasibleMomentsError(mu, sigma2, epsilon)
    common = (mu * mu + sigma2 - c * c) / (2.0 * c * sigma2)
    return BetaShapes(xi1=float(-(mu + c) * common), xi2=float((mu - c) * common), epsilon=epsilon)


def _beta_logpdf(v, xi1, xi2, half_width: float) -> np.ndarray:
    c = half_width
    v = np.clip(np.asarray(v, dtype=float), -c + SUPPORT_INSET, c - SUPPORT_INSET)
    u = (v + c) / (2.0 * c)
    return -np.log(2.0 * c) - betaln(xi1, xi2) + xlogy(xi1 - 1.0, u) + xlogy(xi2 - 1.0, 1.0 - u)


def beta_transition_logpdf(v, shapes: BetaShapes):
    """Log-density of the rescaled Beta at v"""
    c = shapes.half_width
    arr = np.asarray(v, dtype=float)
    if np.any((arr <= -c) | (arr >= c)):
        raise DomainError(f"v must lie inside (-{c:g}, {c:g}), got {v!r}")
    out = _beta_logpdf(arr, shapes.xi1, shapes.xi2, c)
    return float(out) if out.ndim == 0 else out


def _gaussian_terms(obs, mean, var) -> Tuple[np.ndarray, int]:
    var = np.asarray(var, dtype=float)
    floored = np.maximum(var, VARIANCE_FLOOR)
    n_floored = int(np.count_nonzero(floored != var))
    return norm.logpdf(obs, loc=mean, scale=np.sqrt(floored)), n_floored


def _reduce(terms: np.ndarray, flags: Dict[str, int], what: str) -> LogLikValue:
    flags = {k: v for k, v in flags.items() if v}
    bad = ~np.isfinite(terms)
    if np.any(bad):
        flags["nonfinite"] = int(np.count_nonzero(bad))
    value = float(np.sum(terms)) if not np.any(np.isnan(terms)) else -np.inf
    if flags:
        logger.debug("%s: %s over %d transitions", what, flags, len(terms))
    return LogLikValue(value=value, n_transitions=len(terms), flags=flags)


def loglik_v(params: ModelParams, data: SegmentSet, epsilon: float, cfg: IntegratorConfig = IntegratorConfig()) -> LogLikValue:
    """Beta-proxy log-likelihood of the error transitions"""
    batch = transition_batch(data, epsilon, cfg.substeps)
    if batch is None:
        return LogLikValue(0.0, 0)
    with np.errstate(all="ignore"):
        state = integrate_v_moments_batch(batch.v0, batch.grid, params)
        xi1, xi2, adjusted = _shapes_arrays(state.m1, state.variance, epsilon)
        terms = _beta_logpdf(batch.v1, xi1, xi2, 1.0 - epsilon)
    return _reduce(terms, {"infeasible_moments": adjusted}, "loglik_v")


def loglik_v_gaussian(params: ModelParams, data: SegmentSet, epsilon: float, cfg: IntegratorConfig = IntegratorConfig()) -> LogLikValue:
    """Gaussian-proxy log-likelihood with the same two moments as loglik_v"""
    batch = transition_batch(data, epsilon, cfg.substeps)
    if batch is None:
        return LogLikValue(0.0, 0)
    with np.errstate(all="ignore"):
        state = integrate_v_moments_batch(batch.v0, batch.grid, params)
        terms, floored = _gaussian_terms(batch.v1, state.m1, state.variance)
    return _reduce(terms, {"variance_floor": floored}, "loglik_v_gaussian")


def transform_observations(batch: TransitionBatch, params: ModelParams,
                           margin: float = DEFAULT_EPSILON) -> Tuple[np.ndarray, np.ndarray, int]:
    """Lamperti images of both ends of every transition.

    Start points are first pulled into X ∈ [margin, 1 − margin]: the Z drift
    diverges at 0 and 1 and the RK4 moment march is unstable right next to them.
    Returns (z0, z1, number of moved start points).
    """
    x0, moved = pull_inside(batch.x0, margin)
    z0 = np.asarray(lamperti_forward(x0 - batch.p0, batch.p0, params), dtype=float)
    z1 = np.asarray(lamperti_forward(batch.v1, batch.p1, params), dtype=float)
    z0, on_edge = clamp_interior(z0, params)
    return z0, z1, int(np.count_nonzero(moved | on_edge))


def loglik_z(params: ModelParams, data: SegmentSet, epsilon: float, cfg: IntegratorConfig = IntegratorConfig(),
             transform_at: Optional[ModelParams] = None) -> LogLikValue:
    """Gaussian log-likelihood of the Lamperti-transformed transitions.

    Observations are transformed at `transform_at` (default: `params` itself);
    the fixed-point fit freezes them at the previous iterate.
    """
    batch = transition_batch(data, epsilon, cfg.substeps)
    if batch is None:
        return LogLikValue(0.0, 0)
    z0, z1, boundary = transform_observations(batch, transform_at or params, epsilon)
    with np.errstate(all="ignore"):
        state = integrate_z_moments_batch(z0, batch.grid, params)
        terms, floored = _gaussian_terms(z1, state.mu, state.var)
    flags = {"boundary_clamped": boundary, "singularity_clamped": state.n_clamped, "variance_floor": floored}
    return _reduce(terms, flags, "loglik_z")


def _delta_grid(p_start: np.ndarray, p_end: np.ndarray, delta: float, substeps: int) -> TransitionGrid:
    """Straight forecast from p_{−δ} to p(t_0) for every segment"""
    fractions = np.linspace(0.0, 1.0, substeps + 1)
    left, right = fractions[:-1], fractions[1:]
    slope = (p_end - p_start) / delta
    stage_fractions = np.stack([left, 0.5 * (left + right), right], axis=1)  # (K, 3)
    p_stage = p_start[None, None, :] + (p_end - p_start)[None, None, :] * stage_fractions[:, :, None]
    h = np.full((substeps, len(p_start)), delta / substeps)
    return TransitionGrid(h=h, p_stage=p_stage, p_dot=np.broadcast_to(slope, h.shape).copy())


def loglik_delta(params: ModelParams, delta: float, data: SegmentSet, epsilon: float,
                 cfg: IntegratorConfig = IntegratorConfig()) -> LogLikValue:
    """Log-likelihood of each segment's first error given a zero error δ earlier"""
    if not np.isfinite(delta) or delta <= 0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    prepared = data.prepared(check_epsilon(epsilon))
    if not prepared:
        return LogLikValue(0.0, 0)
    p_start = np.array([extrapolate_backward(s.curve, delta) for s in prepared])
    p_end = np.array([float(s.curve.value(s.curve.start)) for s in prepared])
    first = np.array([s.errors[0] for s in prepared])
    grid = _delta_grid(p_start, p_end, float(delta), cfg.substeps)
    with np.errstate(all="ignore"):
        state = integrate_v_moments_batch(np.zeros_like(first), grid, params)
        xi1, xi2, adjusted = _shapes_arrays(state.m1, state.variance, epsilon)
        terms = _beta_logpdf(first, xi1, xi2, 1.0 - epsilon)
    return _reduce(terms, {"infeasible_moments": adjusted}, "loglik_delta")


def delta_start_shapes(params: ModelParams, delta: float, p_start: float, p_end: float, epsilon: float,
                       substeps: int = 20) -> Tuple[float, float, float]:
    """Matched Beta (ξ1, ξ2, half-width) of the error at t_0 for one δ-transition"""
    grid = _delta_grid(np.array([p_start]), np.array([p_end]), float(delta), int(substeps))
    state = integrate_v_moments_batch(np.zeros(1), grid, params, check_finite=True)
    xi1, xi2, _ = _shapes_arrays(state.m1, state.variance, epsilon)
    return float(xi1[0]), float(xi2[0]), 1.0 - epsilon


def loglik_complete(params: ModelParams, delta: float, data: SegmentSet, epsilon: float,
                    cfg: IntegratorConfig = IntegratorConfig()) -> LogLikValue:
    return loglik_v(params, data, epsilon, cfg) + loglik_delta(params, delta, data, epsilon, cfg)


def information_criteria(loglik: LogLikValue, k: int) -> InformationCriteria:
    """AIC = 2k − 2ℓ and BIC = k ln n − 2ℓ with n the number of transitions"""
    if loglik.n_transitions <= 0:
        raise DegenerateDataError("information criteria need at least one transition")
    n = loglik.n_transitions
    return InformationCriteria(
        aic=2.0 * k - 2.0 * loglik.value,
        bic=float(k * np.log(n) - 2.0 * loglik.value),
        k=int(k),
        n=int(n),
    )
