"""SDE core: parameters, drifts and diffusion in error space, the Lamperti pair and the validity conditions.

Two models share one diffusion coefficient √(2αθ0 X(1 − X)):

* ``ModelKind.DERIVATIVE_TRACKING``: dX = (ṗ − θ_t (X − p)) dt + b dW, so that E[X_t] = p_t.
* ``ModelKind.PLAIN``: dX = −θ0 (X − p) dt + b dW, which lags behind a moving forecast.

All functions accept scalars or numpy arrays and broadcast.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .errors import DomainError, SingularityError
from .schedules import ConstantSchedule, ForecastBoundSchedule, ThetaSchedule

if TYPE_CHECKING:
    from .forecast import ForecastCurve

logger = logging.getLogger("jacobicast.model")

ArrayLike = Union[float, np.ndarray]

# Relative width of the band kept away from each end of the Lamperti range
SINGULARITY_GUARD = 1e-9

_DOMAIN_TOL = 1e-12


class ModelKind(str, Enum):
    PLAIN = "plain"
    DERIVATIVE_TRACKING = "derivative_tracking"

    @classmethod
    def parse(cls, value: Union[str, int, 'ModelKind']) -> 'ModelKind':
        """Accept the enum, its value, or the model number used in reports (1 or 2)"""
        if isinstance(value, cls):
            return value
        aliases = {"1": cls.PLAIN, "2": cls.DERIVATIVE_TRACKING}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown model kind {value!r}")

    @property
    def number(self) -> int:
        return 1 if self is ModelKind.PLAIN else 2


@dataclass(frozen=True)
class ModelParams:
    """θ = (θ0, α) plus the model kind.

    α = 0 is accepted so that deterministic limits can be expressed; every
    Lamperti-space operation needs αθ0 > 0 and rejects it.
    """
    theta0: float
    alpha: float
    kind: ModelKind = ModelKind.DERIVATIVE_TRACKING
    schedule: Optional[ThetaSchedule] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if not np.isfinite(self.theta0) or self.theta0 <= 0:
            raise DomainError(f"theta0 must be positive, got {self.theta0!r}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise DomainError(f"alpha must be nonnegative, got {self.alpha!r}")

    @property
    def product(self) -> float:
        return self.theta0 * self.alpha

    @property
    def tracks_derivative(self) -> bool:
        return self.kind is ModelKind.DERIVATIVE_TRACKING

    @property
    def rate_schedule(self) -> ThetaSchedule:
        if not self.tracks_derivative:
            return ConstantSchedule()
        return self.schedule if self.schedule is not None else ForecastBoundSchedule()

    def with_values(self, theta0: float, alpha: float) -> 'ModelParams':
        return replace(self, theta0=float(theta0), alpha=float(alpha))

    def to_dict(self) -> dict:
        return {
            "model": self.kind.number,
            "kind": self.kind.value,
            "theta0": self.theta0,
            "alpha": self.alpha,
            "product": self.product,
            "schedule": self.rate_schedule.name,
        }


@dataclass(frozen=True)
class ExtendedParams:
    """Model parameters plus δ, the lead time of the forecast issue before the first sample"""
    base: ModelParams
    delta: float

    def __post_init__(self):
        if not np.isfinite(self.delta) or self.delta <= 0:
            raise DomainError(f"delta must be positive, got {self.delta!r}")

    def to_dict(self) -> dict:
        out = self.base.to_dict()
        out["delta"] = self.delta
        return out


class Violation(NamedTuple):
    """A failed inequality lhs ≤ rhs at a given time"""
    time: float
    lhs: float
    rhs: float


@dataclass
class ValidityReport:
    violations_a: List[Violation] = field(default_factory=list)
    violations_b: List[Violation] = field(default_factory=list)
    n_points: int = 0

    @property
    def condition_a_ok(self) -> bool:
        return not self.violations_a

    @property
    def condition_b_ok(self) -> bool:
        return not self.violations_b

    @property
    def ok(self) -> bool:
        return self.condition_a_ok and self.condition_b_ok

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "condition_a_ok": self.condition_a_ok,
            "condition_b_ok": self.condition_b_ok,
            "violations_a": [v._asdict() for v in self.violations_a],
            "violations_b": [v._asdict() for v in self.violations_b],
        }


def _scale(params: ModelParams) -> float:
    return params.alpha * params.theta0


def _lamperti_scale(params: ModelParams) -> float:
    scale = _scale(params)
    if scale <= 0:
        raise DomainError("the Lamperti transform needs alpha * theta0 > 0")
    return scale


def _tracking(params: ModelParams, p_dot: ArrayLike) -> ArrayLike:
    """The ṗ term of the X-space drift: ṗ for derivative tracking, 0 otherwise"""
    return p_dot if params.tracks_derivative else 0.0 * np.asarray(p_dot)


def _require_unit_interval(y: ArrayLike, what: str) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    bad = ~((y >= -_DOMAIN_TOL) & (y <= 1.0 + _DOMAIN_TOL))
    if np.any(bad):
        raise DomainError(f"{what} must lie in [0, 1], got {y[bad].ravel()[:3].tolist()}")
    return np.clip(y, 0.0, 1.0)


def _maybe_scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def theta_t(params: ModelParams, p: ArrayLike, p_dot: ArrayLike) -> ArrayLike:
    """Time-varying mean-reversion rate at forecast value p with slope p_dot"""
    if not params.tracks_derivative:
        return params.theta0 if np.ndim(p) == 0 and np.ndim(p_dot) == 0 else params.rate_schedule.rate(params, p, p_dot)
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise DomainError(f"forecast value must lie in (0, 1), got {p!r}")
    return _maybe_scalar(params.rate_schedule.rate(params, p_arr, np.asarray(p_dot, dtype=float)))


def drift_v(v: ArrayLike, p: ArrayLike, p_dot: ArrayLike, params: ModelParams) -> ArrayLike:
    """Drift of the forecast error V = X − p"""
    theta = theta_t(params, p, p_dot)
    return _maybe_scalar(-theta * np.asarray(v, dtype=float) + _tracking(params, p_dot) - np.asarray(p_dot, dtype=float))


def diffusion_v(v: ArrayLike, p: ArrayLike, params: ModelParams) -> ArrayLike:
    y = _require_unit_interval(np.asarray(v, dtype=float) + np.asarray(p, dtype=float), "v + p")
    return _maybe_scalar(np.sqrt(2.0 * _scale(params) * y * (1.0 - y)))


def z_range(params: ModelParams) -> Tuple[float, float]:
    """Closed Lamperti-space interval [z_min, 0]"""
    return -np.pi / np.sqrt(2.0 * _lamperti_scale(params)), 0.0


def lamperti_forward(v: ArrayLike, p: ArrayLike, params: ModelParams) -> ArrayLike:
    """z = −√(2/(αθ0)) arcsin √(1 − v − p)"""
    scale = _lamperti_scale(params)
    y = _require_unit_interval(np.asarray(v, dtype=float) + np.asarray(p, dtype=float), "v + p")
    # arcsin(√(1−y)) written as an angle so both ends stay well conditioned
    angle = np.arctan2(np.sqrt(1.0 - y), np.sqrt(y))
    return _maybe_scalar(-np.sqrt(2.0 / scale) * angle)


def lamperti_inverse(z: ArrayLike, p: ArrayLike, params: ModelParams) -> ArrayLike:
    """v = 1 − p − sin²(−√(αθ0/2) z)"""
    scale = _lamperti_scale(params)
    z = np.asarray(z, dtype=float)
    z_min, _ = z_range(params)
    tol = _DOMAIN_TOL * max(1.0, -z_min)
    bad = ~((z >= z_min - tol) & (z <= tol))
    if np.any(bad):
        raise DomainError(f"z must lie in [{z_min:g}, 0], got {z[bad].ravel()[:3].tolist()}")
    half_angle = -np.sqrt(scale / 2.0) * z
    return _maybe_scalar(np.cos(half_angle) ** 2 - np.asarray(p, dtype=float))


def x_from_z(z: ArrayLike, params: ModelParams) -> ArrayLike:
    """Normalized production X = v + p for a Lamperti value; any real z maps into [0, 1]"""
    return np.cos(np.sqrt(_lamperti_scale(params) / 2.0) * np.asarray(z, dtype=float)) ** 2


def clamp_interior(z: ArrayLike, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Pull z into [z_min + η, −η]; returns the clamped values and the mask of moved entries"""
    z_min, _ = z_range(params)
    eta = SINGULARITY_GUARD * (-z_min)
    z = np.asarray(z, dtype=float)
    clamped = np.clip(z, z_min + eta, -eta)
    return clamped, clamped != z


def pull_inside(x: ArrayLike, margin: float) -> Tuple[np.ndarray, np.ndarray]:
    """Clip X into [margin, 1 − margin]; returns the clipped values and the mask of moved entries"""
    if not 0.0 <= margin < 0.5:
        raise DomainError(f"margin must lie in [0, 0.5), got {margin!r}")
    x = np.asarray(x, dtype=float)
    inside = np.clip(x, margin, 1.0 - margin)
    return inside, inside != x


def fold_z(z: ArrayLike, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Map any real z onto [z_min, 0] by repeated reflection at both ends.

    x_from_z has period 2|z_min| and is even about both ends, so X is unchanged.
    Returns the folded values and the mask of entries that were outside.
    """
    z_min, _ = z_range(params)
    width = -z_min
    z = np.asarray(z, dtype=float)
    outside = (z > 0.0) | (z < z_min)
    offset = np.mod(z - z_min, 2.0 * width)
    folded = z_min + np.where(offset > width, 2.0 * width - offset, offset)
    return folded, outside


def _drift_z_terms(z, p, p_dot, params, theta=None):
    scale = _lamperti_scale(params)
    k = np.sqrt(2.0 * scale)
    if theta is None:
        theta = theta_t(params, p, p_dot)
    w = -k * np.asarray(z, dtype=float)
    a_const = 2.0 * _tracking(params, p_dot) - theta * (1.0 - 2.0 * np.asarray(p, dtype=float))
    b_const = scale - theta
    return k, w, a_const, b_const


def _check_interior(z, params):
    z_min, _ = z_range(params)
    z = np.asarray(z, dtype=float)
    if np.any((z >= 0.0) | (z <= z_min)):
        raise SingularityError(f"z must lie strictly inside ({z_min:g}, 0)")


def drift_z(z: ArrayLike, p: ArrayLike, p_dot: ArrayLike, params: ModelParams) -> ArrayLike:
    """Drift of Z after substituting V back in terms of Z; the diffusion coefficient is 1"""
    _check_interior(z, params)
    return _maybe_scalar(_drift_z_raw(z, p, p_dot, params))


def _drift_z_raw(z, p, p_dot, params, theta=None):
    k, w, a_const, b_const = _drift_z_terms(z, p, p_dot, params, theta)
    return (a_const + b_const * np.cos(w)) / (k * np.sin(w))


def drift_z_unsubstituted(z: ArrayLike, p: ArrayLike, p_dot: ArrayLike, params: ModelParams) -> ArrayLike:
    """Same drift written through V: Itô's formula applied to the transform before simplification"""
    _check_interior(z, params)
    k = np.sqrt(2.0 * _lamperti_scale(params))
    v = np.asarray(lamperti_inverse(z, p, params), dtype=float)
    y = v + np.asarray(p, dtype=float)
    root = np.sqrt(y * (1.0 - y))
    theta = theta_t(params, p, p_dot)
    first = (_tracking(params, p_dot) - theta * v) / (k * root)
    correction = 0.25 * k * (1.0 - 2.0 * y) / root
    return _maybe_scalar(first - correction)


def drift_z_prime(z: ArrayLike, p: ArrayLike, p_dot: ArrayLike, params: ModelParams) -> ArrayLike:
    """∂/∂z of the Lamperti-space drift"""
    _check_interior(z, params)
    return _maybe_scalar(_drift_z_prime_raw(z, p, p_dot, params))


def _drift_z_prime_raw(z, p, p_dot, params, theta=None):
    _, w, a_const, b_const = _drift_z_terms(z, p, p_dot, params, theta)
    return (b_const + a_const * np.cos(w)) / np.sin(w) ** 2


def drift_z_guarded(z: ArrayLike, p: ArrayLike, p_dot: ArrayLike, params: ModelParams, theta: Optional[ArrayLike] = None) -> Tuple[np.ndarray, np.ndarray, int]:
    """Drift and its z-derivative after clamping z off the singular ends.

    Returns (drift, derivative, number of clamped entries).
    """
    inner, moved = clamp_interior(z, params)
    if theta is None:
        theta = theta_t(params, p, p_dot)
    return _drift_z_raw(inner, p, p_dot, params, theta), _drift_z_prime_raw(inner, p, p_dot, params, theta), int(np.count_nonzero(moved))


def condition_b_bound(params: ModelParams, p: ArrayLike, p_dot: ArrayLike) -> ArrayLike:
    """max((αθ0 + ṗ)/(1 − p), (αθ0 − ṗ)/p), the smallest θ_t keeping both boundaries unattainable"""
    scale = _scale(params)
    p = np.asarray(p, dtype=float)
    p_dot = np.asarray(p_dot, dtype=float)
    return _maybe_scalar(np.maximum((scale + p_dot) / (1.0 - p), (scale - p_dot) / p))


def check_conditions(curve: 'ForecastCurve', params: ModelParams, grid: Optional[np.ndarray] = None) -> ValidityReport:
    """Evaluate the existence condition (A) and the boundary condition (B) pointwise on a time grid.

    (A): 0 ≤ ṗ + θ_t p ≤ θ_t.  (B): θ_t ≥ condition_b_bound.
    Each failed inequality is reported as lhs ≤ rhs that did not hold.
    """
    times = np.asarray(curve.knot_times if grid is None else grid, dtype=float)
    p = np.asarray(curve.value(times), dtype=float)
    p_dot = np.asarray(curve.slope(times), dtype=float)
    theta = np.asarray(theta_t(params, p, p_dot), dtype=float) * np.ones_like(p)
    pull = p_dot + theta * p
    bound = np.asarray(condition_b_bound(params, p, p_dot), dtype=float)
    tol = 1e-12 * np.maximum(1.0, np.abs(theta))

    report = ValidityReport(n_points=len(times))
    for t, value, rate in zip(times[pull < -tol], pull[pull < -tol], theta[pull < -tol]):
        report.violations_a.append(Violation(float(t), 0.0, float(value)))
    upper = pull > theta + tol
    for t, value, rate in zip(times[upper], pull[upper], theta[upper]):
        report.violations_a.append(Violation(float(t), float(value), float(rate)))
    report.violations_a.sort(key=lambda v: v.time)
    short = bound > theta + tol
    for t, need, rate in zip(times[short], bound[short], theta[short]):
        report.violations_b.append(Violation(float(t), float(need), float(rate)))
    if not report.ok:
        logger.debug("validity check: %d (A) and %d (B) violations on %d points",
                     len(report.violations_a), len(report.violations_b), len(times))
    return report
