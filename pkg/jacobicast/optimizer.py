"""Derivative-free minimizers: Nelder–Mead simplex and golden-section line search."""
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError

logger = logging.getLogger("jacobicast.optimizer")

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
GRID_POINTS = 20


@dataclass(frozen=True)
class OptimizerConfig:
    """Simplex settings. Coordinates are whatever the objective takes (log-parameters in the fits)."""
    initial_step: float = 0.1
    xtol: float = 1e-6
    ftol: float = 1e-8
    max_evals: int = 2000

    def __post_init__(self):
        if self.xtol <= 0 or self.ftol <= 0:
            raise DomainError("optimizer tolerances must be positive")
        if self.initial_step <= 0:
            raise DomainError("the initial simplex step must be positive")
        if self.max_evals < 1:
            raise DomainError("max_evals must be at least 1")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool
    reason: str

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in np.atleast_1d(self.x)],
            "fun": float(self.fun),
            "n_evals": self.n_evals,
            "converged": self.converged,
            "reason": self.reason,
        }


class _Counted:
    def __init__(self, objective: Callable[[np.ndarray], float]):
        self.objective = objective
        self.calls = 0

    def __call__(self, x) -> float:
        self.calls += 1
        value = float(self.objective(x))
        return value if np.isfinite(value) else np.inf


def nelder_mead(objective: Callable[[np.ndarray], float], x0: Sequence[float],
                cfg: OptimizerConfig = OptimizerConfig()) -> OptimizeResult:
    """Minimize `objective` with the standard simplex method.

    Reflection 1, expansion 2, contraction 1/2, shrink 1/2. Stops when the
    simplex diameter drops below xtol, when the spread of function values
    drops below ftol (relative to max(1, |f_best|)), or after max_evals.
    Non-finite objective values are treated as +inf.
    """
    f = _Counted(objective)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = len(x0)
    simplex = np.vstack([x0] + [x0 + cfg.initial_step * np.eye(n)[i] for i in range(n)])
    values = np.array([f(v) for v in simplex])
    if not np.isfinite(values[0]):
        logger.warning("nelder_mead: objective is not finite at the starting point")

    reason = "max_evals"
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]

        diameter = np.max(np.abs(simplex[1:] - simplex[0]))
        spread = values[-1] - values[0]
        if diameter <= cfg.xtol:
            reason = "xtol"
            break
        if np.isfinite(spread) and spread <= cfg.ftol * max(1.0, abs(values[0])):
            reason = "ftol"
            break
        if f.calls >= cfg.max_evals:
            break

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        reflected = centroid + (centroid - worst)
        f_r = f(reflected)

        if f_r < values[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = f(expanded)
            if f_e < f_r:
                simplex[-1], values[-1] = expanded, f_e
            else:
                simplex[-1], values[-1] = reflected, f_r
            continue
        if f_r < values[-2]:
            simplex[-1], values[-1] = reflected, f_r
            continue

        if f_r < values[-1]:
            contracted = centroid + 0.5 * (reflected - centroid)
            f_c = f(contracted)
            accept = f_c <= f_r
        else:
            contracted = centroid + 0.5 * (worst - centroid)
            f_c = f(contracted)
            accept = f_c < values[-1]
        if accept:
            simplex[-1], values[-1] = contracted, f_c
            continue

        # shrink towards the best vertex
        simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
        values[1:] = [f(v) for v in simplex[1:]]

    converged = reason != "max_evals"
    logger.debug("nelder_mead: stopped on %s after %d evaluations, f=%g", reason, f.calls, values[0])
    return OptimizeResult(x=simplex[0].copy(), fun=float(values[0]), n_evals=f.calls, converged=converged, reason=reason)


def _golden(f: _Counted, a: float, b: float, tol: float, max_evals: int):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol and f.calls < max_evals:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def golden_section(objective: Callable[[float], float], lower: float, upper: float,
                   tol: float = 1e-6, max_evals: int = 200) -> OptimizeResult:
    """Minimize a function of one variable on [lower, upper].

    The interval is searched directly when its interior beats both ends;
    otherwise a 20-point grid picks the best cell and the search runs there.
    A minimum at either end is reported with reason "boundary".
    """
    if not upper > lower:
        raise DomainError(f"empty search interval [{lower!r}, {upper!r}]")
    f = _Counted(objective)
    f_lower, f_upper = f(lower), f(upper)
    inner_c = upper - GOLDEN * (upper - lower)
    inner_d = lower + GOLDEN * (upper - lower)
    bracketed = min(f(inner_c), f(inner_d)) <= min(f_lower, f_upper)

    if bracketed:
        a, b = lower, upper
    else:
        grid = np.linspace(lower, upper, GRID_POINTS)
        values = np.array([f(g) for g in grid])
        best = int(np.argmin(values))
        a, b = grid[max(best - 1, 0)], grid[min(best + 1, GRID_POINTS - 1)]
        logger.debug("golden_section: bracket test failed, grid minimum at %g", grid[best])

    x, fx = _golden(f, a, b, tol, max_evals)
    for end, f_end in ((lower, f_lower), (upper, f_upper)):
        if f_end < fx:
            x, fx = end, f_end
    at_boundary = min(abs(x - lower), abs(x - upper)) <= max(tol, 1e-12) * 10.0
    reason = "boundary" if at_boundary else ("tol" if f.calls < max_evals else "max_evals")
    return OptimizeResult(x=np.array([x]), fun=float(fx), n_evals=f.calls, converged=reason != "max_evals", reason=reason)
