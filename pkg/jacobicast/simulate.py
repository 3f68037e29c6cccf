"""Monte Carlo paths of the production process, and what is computed from them.

Two Euler–Maruyama schemes:

* ``z_space``: steps the Lamperti variable (unit diffusion) and maps back, so every
  sample lies in [0, 1]; steps past either end of the Z range are folded back by
  reflection, and start points are pulled ε inside [0, 1].
* ``v_space_clamped``: steps the error V directly and reflects X at [1e-9, 1 − 1e-9].

Random numbers come in fixed blocks of paths, each block with its own Philox stream
keyed by (seed, block index), so a bundle does not depend on how many threads ran it.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.stats import beta as beta_dist

from .errors import DataError, DomainError
from .forecast import DEFAULT_EPSILON, ForecastCurve, SegmentSet, check_epsilon, extrapolate_backward
from .likelihood import delta_start_shapes
from .model import (
    ModelParams,
    check_conditions,
    diffusion_v,
    drift_v,
    drift_z_guarded,
    fold_z,
    lamperti_forward,
    pull_inside,
    theta_t,
    x_from_z,
    z_range,
)

logger = logging.getLogger("jacobicast.simulate")

SCHEMES = ("z_space", "v_space_clamped")
BLOCK_SIZE = 1000
V_SPACE_GUARD = 1e-9


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 5000
    substeps: int = 10
    scheme: str = "z_space"
    seed: Optional[int] = None
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be at least 1, got {self.n_paths!r}")
        if self.substeps < 1:
            raise DomainError(f"substeps must be at least 1, got {self.substeps!r}")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")


@dataclass
class PathBundle:
    times: np.ndarray
    paths: np.ndarray
    forecast: np.ndarray
    seed: int
    scheme: str
    n_reflected: int = 0
    n_clamped: int = 0
    aborted: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.aborted is None:
            self.aborted = np.zeros(self.paths.shape[0], dtype=bool)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def valid_paths(self) -> np.ndarray:
        return self.paths[~self.aborted]

    @property
    def errors(self) -> np.ndarray:
        return self.valid_paths - self.forecast[None, :]


@dataclass
class BandSet:
    times: np.ndarray
    levels: List[float]
    lower: np.ndarray
    upper: np.ndarray
    median: np.ndarray

    def band(self, level: float) -> Tuple[np.ndarray, np.ndarray]:
        i = self.levels.index(level)
        return self.lower[i], self.upper[i]

    def coverage(self, truth: np.ndarray, level: float) -> float:
        """Fraction of grid points where `truth` lies inside the band"""
        lower, upper = self.band(level)
        return float(np.mean((truth >= lower) & (truth <= upper)))


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def _fine_grid(times: np.ndarray, substeps: int):
    """Sub-step start times and sizes covering the observation grid"""
    fractions = np.arange(substeps) / substeps
    starts = (times[:-1, None] + np.diff(times)[:, None] * fractions[None, :]).ravel()
    sizes = np.repeat(np.diff(times) / substeps, substeps)
    return starts, sizes


def derive_seed(seed: int, *keys: int) -> int:
    """An independent 63-bit seed for the stream labelled `keys` under `seed`"""
    return int(np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys)).generate_state(1, dtype=np.uint64)[0] >> 1)


def draw_seed() -> int:
    return int(np.random.SeedSequence().entropy % (2 ** 63))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(block,))))


class _Stepper:
    """Per-bundle constants shared by every block"""

    def __init__(self, params: ModelParams, curve: ForecastCurve, times: np.ndarray, cfg: SimConfig,
                 v0: float, delta: Optional[float], epsilon: float):
        self.params = params
        self.curve = curve
        self.times = times
        self.cfg = cfg
        self.v0 = v0
        self.delta = delta
        self.epsilon = epsilon
        self.t_start, self.h = _fine_grid(times, cfg.substeps)
        self.p = np.asarray(curve.value(self.t_start), dtype=float)
        self.p_next = np.asarray(curve.value(self.t_start + self.h), dtype=float)
        self.p_dot = np.asarray(curve.slope(self.t_start + 0.5 * self.h), dtype=float)
        self.theta = np.asarray(theta_t(params, self.p, self.p_dot), dtype=float) * np.ones_like(self.p)
        self.p0 = float(curve.value(times[0]))
        self.scheme = cfg.scheme
        if params.product == 0 and self.scheme == "z_space":
            logger.debug("zero diffusion, stepping in error space")
            self.scheme = "v_space_clamped"
        if delta is not None:
            p_back = extrapolate_backward(curve, delta)
            self.start_shapes = delta_start_shapes(params, delta, p_back, self.p0, epsilon)

    def initial_x(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.delta is None:
            return np.full(n, self.v0 + self.p0)
        xi1, xi2, c = self.start_shapes
        v0 = beta_dist.rvs(xi1, xi2, loc=-c, scale=2.0 * c, size=n, random_state=rng)
        return np.clip(v0 + self.p0, 0.0, 1.0)

    def run_block(self, block: int, n: int):
        rng = _block_rng(self.cfg.seed, block)
        x = self.initial_x(rng, n)
        out = np.empty((n, len(self.times)))
        out[:, 0] = x
        aborted = np.zeros(n, dtype=bool)
        reflected = clamped = 0
        substeps = self.cfg.substeps
        if self.scheme == "z_space":
            z_min, _ = z_range(self.params)
            x, moved = pull_inside(x, self.epsilon)
            clamped += int(np.count_nonzero(moved))
            out[:, 0] = x
            z = np.asarray(lamperti_forward(x - self.p0, self.p0, self.params), dtype=float)
        else:
            v = x - self.p0
        for k in range(len(self.h)):
            noise = rng.standard_normal(n)
            h = self.h[k]
            if self.scheme == "z_space":
                a, _, n_fix = drift_z_guarded(z, self.p[k], self.p_dot[k], self.params, self.theta[k])
                clamped += n_fix
                z, outside = fold_z(z + a * h + np.sqrt(h) * noise, self.params)
                reflected += int(np.count_nonzero(outside))
                x = x_from_z(z, self.params)
            else:
                x_now = np.clip(v + self.p[k], 0.0, 1.0)
                drift = drift_v(v, self.p[k], self.p_dot[k], self.params)
                scale = diffusion_v(x_now - self.p[k], self.p[k], self.params)
                x = v + drift * h + scale * np.sqrt(h) * noise + self.p_next[k]
                lo, hi = V_SPACE_GUARD, 1.0 - V_SPACE_GUARD
                outside = (x < lo) | (x > hi)
                clamped += int(np.count_nonzero(outside))
                x = np.clip(np.where(x < lo, 2.0 * lo - x, np.where(x > hi, 2.0 * hi - x, x)), 0.0, 1.0)
                v = x - self.p_next[k]
            bad = ~np.isfinite(x)
            if np.any(bad):
                aborted |= bad
                x = np.where(bad, self.p_next[k], x)
                if self.scheme == "z_space":
                    z = np.where(bad, 0.5 * z_min, z)
                else:
                    v = np.where(bad, 0.0, v)
            if (k + 1) % substeps == 0:
                out[:, (k + 1) // substeps] = x
        out[aborted] = np.nan
        return out, aborted, reflected, clamped


def simulate_paths(params: ModelParams, curve: ForecastCurve, times: Sequence[float], cfg: SimConfig = SimConfig(),
                   v0: float = 0.0, delta: Optional[float] = None, epsilon: Optional[float] = None) -> PathBundle:
    """Simulate cfg.n_paths trajectories of X on the observation grid `times`.

    Paths start at x0 = v0 + p(t_0), or, when `delta` is given, from the
    matched Beta of a zero error δ before t_0.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise DomainError("simulation times must be a strictly increasing grid of at least two points")
    epsilon = check_epsilon(curve.epsilon if epsilon is None else epsilon)
    if delta is None and not 0.0 <= v0 + float(curve.value(times[0])) <= 1.0:
        raise DomainError(f"v0 + p(t0) must lie in [0, 1], got {v0 + float(curve.value(times[0]))!r}")
    seed = cfg.seed if cfg.seed is not None else draw_seed()
    cfg = SimConfig(cfg.n_paths, cfg.substeps, cfg.scheme, seed, cfg.threads)

    report = check_conditions(curve, params, _fine_grid(times, cfg.substeps)[0])
    if not report.condition_b_ok:
        logger.warning("boundary condition fails at %d of %d grid points; paths may touch 0 or 1",
                       len(report.violations_b), report.n_points)

    stepper = _Stepper(params, curve, times, cfg, v0, delta, epsilon)
    blocks = [(b, min(BLOCK_SIZE, cfg.n_paths - b * BLOCK_SIZE)) for b in range(-(-cfg.n_paths // BLOCK_SIZE))]
    if cfg.threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda blk: stepper.run_block(*blk), blocks))
    else:
        results = [stepper.run_block(*blk) for blk in blocks]

    aborted = np.concatenate([r[1] for r in results])
    if np.any(aborted):
        logger.warning("%d paths aborted on a non-finite state", int(np.count_nonzero(aborted)))
    return PathBundle(
        times=times,
        paths=np.vstack([r[0] for r in results]),
        forecast=np.asarray(curve.value(times), dtype=float),
        seed=seed,
        scheme=stepper.scheme,
        n_reflected=sum(r[2] for r in results),
        n_clamped=sum(r[3] for r in results),
        aborted=aborted,
    )


def quadratic_variation(path, grid: Optional[Sequence[float]] = None):
    """Σ (V_{t_i} − V_{t_{i−1}})² along the last axis"""
    path = np.asarray(path, dtype=float)
    if path.shape[-1] < 2:
        raise DomainError("quadratic variation needs at least two samples")
    if grid is not None and len(grid) != path.shape[-1]:
        raise DomainError("grid and path lengths differ")
    out = np.sum(np.diff(path, axis=-1) ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def integrated_squared_diffusion(params: ModelParams, forecast: np.ndarray, errors: np.ndarray, times: np.ndarray):
    """Trapezoidal ∫ 2αθ0 x(1 − x) dt along each path; the limit of quadratic_variation"""
    x = np.clip(np.asarray(errors) + np.asarray(forecast), 0.0, 1.0)
    return trapezoid(2.0 * params.product * x * (1.0 - x), times, axis=-1)


def _differences(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.diff(values)
    return np.diff(values, axis=-1).ravel()


def step_histogram(steps, bins: int = 50, value_range: Optional[Tuple[float, float]] = None) -> Histogram:
    """Density histogram of already differenced values, equal-width bins"""
    steps = np.asarray(steps, dtype=float).ravel()
    steps = steps[np.isfinite(steps)]
    if steps.size == 0:
        raise DomainError("a transition histogram needs at least one transition")
    lo, hi = value_range if value_range is not None else (float(steps.min()), float(steps.max()))
    if hi <= lo:
        half = 1e-6
        edges = np.array([lo - half, lo + half])
        return Histogram(edges=edges, density=np.array([1.0 / (2.0 * half)]))
    density, edges = np.histogram(steps, bins=bins, range=(lo, hi), density=True)
    return Histogram(edges=edges, density=density)


def transition_histogram(values, bins: int = 50, value_range: Optional[Tuple[float, float]] = None) -> Histogram:
    """Density histogram of first differences of one series (1-d) or of every row (2-d), equal-width bins"""
    return step_histogram(_differences(values), bins, value_range)


@dataclass
class TransitionComparison:
    observed: Histogram
    simulated: Histogram
    distance: float


def compare_transitions(observed_steps, simulated_steps, bins: int = 50) -> TransitionComparison:
    """Histograms of two sets of transitions on shared bins and their total variation distance"""
    a = np.asarray(observed_steps, dtype=float).ravel()
    b = np.asarray(simulated_steps, dtype=float).ravel()
    a, b = a[np.isfinite(a)], b[np.isfinite(b)]
    if a.size == 0 or b.size == 0:
        raise DomainError("both sides of a transition comparison need at least one transition")
    value_range = (float(min(a.min(), b.min())), float(max(a.max(), b.max())))
    observed = step_histogram(a, bins, value_range)
    simulated = step_histogram(b, bins, value_range)
    distance = 0.5 * float(np.sum(np.abs(observed.density - simulated.density) * observed.widths))
    return TransitionComparison(observed=observed, simulated=simulated, distance=distance)


def histogram_distance(a, b, bins: int = 50) -> float:
    """Total variation distance between the transition histograms of two series on shared bins"""
    return compare_transitions(_differences(a), _differences(b), bins).distance


def empirical_bands(bundle: PathBundle, levels: Sequence[float] = (0.5, 0.9, 0.99)) -> BandSet:
    """Pointwise central quantile bands, one per level, nested by construction"""
    levels = sorted(float(level) for level in levels)
    if any(not 0.0 <= level < 1.0 for level in levels):
        raise DomainError(f"band levels must lie in [0, 1), got {levels}")
    paths = bundle.valid_paths
    n = paths.shape[0]
    if n == 0:
        raise DomainError("no valid paths to build bands from")
    if n < 100:
        logger.warning("only %d paths; bands will be coarse", n)
    if n * (1.0 - levels[-1]) / 2.0 < 10:
        logger.warning("%d paths give fewer than 10 expected exceedances per side at level %g", n, levels[-1])
    q_lower = [(1.0 - level) / 2.0 for level in levels]
    q_upper = [(1.0 + level) / 2.0 for level in levels]
    lower = np.quantile(paths, q_lower, axis=0)
    upper = np.quantile(paths, q_upper, axis=0)
    return BandSet(times=bundle.times, levels=levels, lower=lower, upper=upper, median=np.quantile(paths, 0.5, axis=0))


def lamperti_transitions(data: SegmentSet, params: ModelParams, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """First differences of the Lamperti-transformed observations, all segments concatenated"""
    steps = []
    for prepared in data.prepared(check_epsilon(epsilon)):
        z = lamperti_forward(prepared.errors, prepared.curve.value(prepared.times), params)
        steps.append(np.diff(np.asarray(z, dtype=float)))
    if not steps:
        raise DataError("no segments to transform")
    return np.concatenate(steps)


def lamperti_paths(bundle: PathBundle, params: ModelParams) -> np.ndarray:
    """Lamperti images of the valid simulated paths, one row per path"""
    forecast = np.broadcast_to(bundle.forecast, bundle.valid_paths.shape)
    return np.asarray(lamperti_forward(bundle.errors, forecast, params), dtype=float)


def plain_mean(curve: ForecastCurve, theta0: float, times: Sequence[float], x0: Optional[float] = None) -> np.ndarray:
    """E[X_t] of the plain model: p_t − e^{−θ0 (t − t0)}(p_{t0} − x0) − ∫ ṗ_s e^{−θ0 (t − s)} ds.

    With x0 = p_{t0} (the default) only the lag term remains.
    """
    times = np.asarray(times, dtype=float)
    t0 = float(times[0])
    p0 = float(curve.value(t0))
    x0 = p0 if x0 is None else float(x0)
    knots = curve.knot_times
    lag = np.zeros_like(times)
    for a, b, slope in zip(knots[:-1], knots[1:], curve.slopes):
        lo = np.clip(np.maximum(a, t0), None, times)
        hi = np.clip(np.minimum(b, times), lo, None)
        lag += slope * (np.exp(-theta0 * (times - hi)) - np.exp(-theta0 * (times - lo))) / theta0
    return curve.value(times) - np.exp(-theta0 * (times - t0)) * (p0 - x0) - lag


def write_paths_csv(bundle: PathBundle, path: Union[str, Path], n_paths: Optional[int] = None) -> None:
    """Long format: time,path_id,value"""
    paths = bundle.paths[: n_paths or bundle.n_paths]
    frame = pd.DataFrame({
        "time": np.tile(bundle.times, paths.shape[0]),
        "path_id": np.repeat(np.arange(paths.shape[0]), len(bundle.times)),
        "value": paths.ravel(),
    })
    frame.to_csv(path, index=False, float_format="%.10g")


def write_bands_csv(bands: BandSet, path: Union[str, Path], realized: Optional[np.ndarray] = None) -> None:
    """Long format: time,level,lower,upper[,realized]"""
    frames = []
    for i, level in enumerate(bands.levels):
        frame = pd.DataFrame({"time": bands.times, "level": level, "lower": bands.lower[i], "upper": bands.upper[i]})
        if realized is not None:
            frame["realized"] = realized
        frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.10g")


def write_histogram_csv(histogram: Histogram, path: Union[str, Path]) -> None:
    pd.DataFrame({
        "bin_left": histogram.edges[:-1],
        "bin_right": histogram.edges[1:],
        "density": histogram.density,
    }).to_csv(path, index=False, float_format="%.10g")
