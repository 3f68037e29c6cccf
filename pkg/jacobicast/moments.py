"""Transition moments over inter-observation intervals.

Error space: first and second raw moments (m1, m2) of V.
Lamperti space: mean and variance of Z from the drift linearized around the mean.

Both systems are integrated with classical fixed-step RK4 on a grid that is
split at forecast knots, so the piecewise-constant ṗ never changes inside a
step. Batches of transitions are integrated together, one numpy column each.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .errors import DomainError, IntegrationError
from .forecast import ForecastCurve
from .model import ModelParams, drift_z_guarded, theta_t

logger = logging.getLogger("jacobicast.moments")

VARIANCE_TOL = 1e-10

# RK4 stage positions inside a step: start, midpoint, end
_STAGE_FRACTION = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class IntegratorConfig:
    substeps: int = 20
    method: str = "rk4"

    def __post_init__(self):
        if int(self.substeps) < 1:
            raise DomainError(f"substeps must be at least 1, got {self.substeps!r}")
        if self.method != "rk4":
            raise DomainError(f"only fixed-step rk4 is available, got {self.method!r}")


@dataclass(frozen=True)
class MomentStateV:
    m1: np.ndarray
    m2: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return self.m2 - self.m1 ** 2


@dataclass(frozen=True)
class MomentStateZ:
    mu: np.ndarray
    var: np.ndarray
    n_clamped: int = 0


def rk4_march(rhs: Callable[[int, int, np.ndarray], np.ndarray], y0: np.ndarray, h: np.ndarray,
              check_finite: bool = True) -> np.ndarray:
    """Advance y through the steps h[0], h[1], ... with classical RK4.

    rhs(k, stage, y) is the derivative during step k at stage 0 (start),
    1 (midpoint) or 2 (end). h may hold one step size per column of y.
    """
    y = np.array(y0, dtype=float, copy=True)
    for k in range(len(h)):
        step = h[k]
        k1 = rhs(k, 0, y)
        k2 = rhs(k, 1, y + 0.5 * step * k1)
        k3 = rhs(k, 1, y + 0.5 * step * k2)
        k4 = rhs(k, 2, y + step * k3)
        y = y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if check_finite and not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state after step {k + 1} of {len(h)}")
    return y


def rk4_integrate(f: Callable[[float, np.ndarray], np.ndarray], y0, interval: Tuple[float, float], substeps: int):
    """Integrate dy/dt = f(t, y) over interval with `substeps` equal RK4 steps"""
    if int(substeps) < 1:
        raise DomainError(f"substeps must be at least 1, got {substeps!r}")
    t0, t1 = interval
    nodes = np.linspace(t0, t1, int(substeps) + 1)
    h = np.diff(nodes)
    scalar = np.ndim(y0) == 0

    def rhs(k, stage, y):
        return np.asarray(f(nodes[k] + _STAGE_FRACTION[stage] * h[k], y), dtype=float)

    y = rk4_march(rhs, np.asarray(y0, dtype=float), h)
    return float(y) if scalar else y


class TransitionGrid:
    """Substep layout and forecast values at every RK4 stage for a batch of transitions.

    Depends only on the data, so it is built once and reused for every
    parameter vector the optimizer tries.
    """

    def __init__(self, h: np.ndarray, p_stage: np.ndarray, p_dot: np.ndarray):
        self.h = h              # (K, n)
        self.p_stage = p_stage  # (K, 3, n)
        self.p_dot = p_dot      # (K, n)

    @property
    def n_transitions(self) -> int:
        return self.h.shape[1]

    @property
    def n_steps(self) -> int:
        return self.h.shape[0]

    @property
    def p_start(self) -> np.ndarray:
        return self.p_stage[0, 0]

    @property
    def p_end(self) -> np.ndarray:
        return self.p_stage[-1, 2] if self.n_steps else self.p_stage[0, 0]

    @classmethod
    def build(cls, pieces: Sequence[Tuple[ForecastCurve, np.ndarray, np.ndarray]], substeps: int) -> 'TransitionGrid':
        """pieces: (curve, interval starts, interval ends) per curve"""
        substeps = int(substeps)
        node_lists: List[np.ndarray] = []
        owners: List[Tuple[ForecastCurve, int]] = []
        for curve, starts, ends in pieces:
            starts = np.asarray(starts, dtype=float)
            ends = np.asarray(ends, dtype=float)
            uniform = starts[:, None] + (ends - starts)[:, None] * np.linspace(0.0, 1.0, substeps + 1)[None, :]
            inner = [curve.interior_knots(a, b) for a, b in zip(starts, ends)]
            if not any(len(k) for k in inner):
                node_lists.append(uniform)
                owners.append((curve, len(starts)))
                continue
            width = substeps + 1 + max(len(k) for k in inner)
            padded = np.empty((len(starts), width))
            for row, (nodes, knots) in enumerate(zip(uniform, inner)):
                merged = np.unique(np.concatenate([nodes, knots]))
                padded[row, :len(merged)] = merged
                padded[row, len(merged):] = merged[-1]
            node_lists.append(padded)
            owners.append((curve, len(starts)))

        width = max(nodes.shape[1] for nodes in node_lists)
        blocks_p, blocks_pdot, blocks_h = [], [], []
        for nodes, (curve, _) in zip(node_lists, owners):
            if nodes.shape[1] < width:
                nodes = np.concatenate([nodes, np.repeat(nodes[:, -1:], width - nodes.shape[1], axis=1)], axis=1)
            left, right = nodes[:, :-1], nodes[:, 1:]
            mid = 0.5 * (left + right)
            blocks_h.append((right - left).T)
            blocks_p.append(np.stack([curve.value(left).T, curve.value(mid).T, curve.value(right).T], axis=1))
            blocks_pdot.append(np.asarray(curve.slope(mid)).T)
        return cls(
            h=np.concatenate(blocks_h, axis=1),
            p_stage=np.concatenate(blocks_p, axis=2),
            p_dot=np.concatenate(blocks_pdot, axis=1),
        )

    def rates(self, params: ModelParams) -> np.ndarray:
        """θ_t at every stage point, shape (K, 3, n)"""
        return np.asarray(theta_t(params, self.p_stage, self.p_dot[:, None, :]), dtype=float) * np.ones_like(self.p_stage)


def _v_rhs(grid: TransitionGrid, params: ModelParams):
    scale = params.alpha * params.theta0
    theta = grid.rates(params)
    # Plain models carry −ṗ in the error drift, derivative tracking cancels it
    offset = np.zeros_like(grid.p_dot) if params.tracks_derivative else -grid.p_dot

    def rhs(k, stage, y):
        m1, m2 = y
        rate = theta[k, stage]
        p = grid.p_stage[k, stage]
        g = offset[k]
        dm1 = -rate * m1 + g
        dm2 = 2.0 * (-rate * m2 + g * m1) + 2.0 * scale * ((1.0 - 2.0 * p) * m1 + p * (1.0 - p) - m2)
        return np.stack([dm1, dm2])

    return rhs


def integrate_v_moments_batch(v0: np.ndarray, grid: TransitionGrid, params: ModelParams,
                              check_finite: bool = False) -> MomentStateV:
    """Moments of V at the end of every transition in the grid, started from the observed v0"""
    v0 = np.asarray(v0, dtype=float)
    y = rk4_march(_v_rhs(grid, params), np.stack([v0, v0 ** 2]), grid.h, check_finite=check_finite)
    return MomentStateV(m1=y[0], m2=y[1])


def integrate_z_moments_batch(z0: np.ndarray, grid: TransitionGrid, params: ModelParams,
                              check_finite: bool = False) -> MomentStateZ:
    """Linearized mean and variance of Z at the end of every transition, started from z0 with zero variance"""
    theta = grid.rates(params)
    clamped = [0]

    def rhs(k, stage, y):
        mu, var = y
        p_dot = grid.p_dot[k]
        a, a_prime, n = drift_z_guarded(mu, grid.p_stage[k, stage], p_dot, params, theta[k, stage])
        clamped[0] += n
        return np.stack([a, 2.0 * a_prime * var + 1.0])

    z0 = np.asarray(z0, dtype=float)
    y = rk4_march(rhs, np.stack([z0, np.zeros_like(z0)]), grid.h, check_finite=check_finite)
    if clamped[0]:
        logger.debug("z moments: drift evaluated at %d clamped points", clamped[0])
    return MomentStateZ(mu=y[0], var=y[1], n_clamped=clamped[0])


def _single_grid(interval: Tuple[float, float], curve: ForecastCurve, cfg: IntegratorConfig) -> TransitionGrid:
    t0, t1 = interval
    if not t1 > t0:
        raise DomainError(f"interval end must follow its start, got {interval!r}")
    return TransitionGrid.build([(curve, np.array([t0]), np.array([t1]))], cfg.substeps)


def integrate_v_moments(v0: float, interval: Tuple[float, float], curve: ForecastCurve, params: ModelParams,
                        cfg: IntegratorConfig = IntegratorConfig()) -> MomentStateV:
    p0 = float(curve.value(interval[0]))
    if not -1e-12 <= v0 + p0 <= 1.0 + 1e-12:
        raise DomainError(f"v0 + p(t0) must lie in [0, 1], got {v0 + p0!r}")
    state = integrate_v_moments_batch(np.array([v0]), _single_grid(interval, curve, cfg), params, check_finite=True)
    return MomentStateV(m1=float(state.m1[0]), m2=float(state.m2[0]))


def integrate_z_moments(z0: float, interval: Tuple[float, float], curve: ForecastCurve, params: ModelParams,
                        cfg: IntegratorConfig = IntegratorConfig()) -> MomentStateZ:
    state = integrate_z_moments_batch(np.array([z0]), _single_grid(interval, curve, cfg), params, check_finite=True)
    return MomentStateZ(mu=float(state.mu[0]), var=float(state.var[0]), n_clamped=state.n_clamped)
