"""Seeded synthetic forecasts and production simulated from a known model"""
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .forecast import DEFAULT_EPSILON, ForecastCurve, NormalizedSeries, Segment, SegmentSet, truncate_forecast
from .model import ModelParams
from .simulate import SimConfig, derive_seed, simulate_paths

logger = logging.getLogger("jacobicast.synthetic")

SYNTHETIC_START = "2019-04-01T13:00:00+00:00"

# hours into a curtailed day where the plateau is planted, and its levels
_CURTAIL_HOURS = (2, 4)
_CURTAIL_FORECAST = 0.6
_CURTAIL_LEVEL = 0.3


def random_forecast_knots(n_hours: int, seed: int, low: float = 0.05, high: float = 0.95,
                          persistence: float = 0.9, volatility: float = 0.35) -> np.ndarray:
    """n_hours + 1 hourly forecast values: a mean-reverting random walk in logit space mapped into [low, high]"""
    rng = np.random.default_rng(seed)
    logit = np.empty(n_hours + 1)
    logit[0] = rng.normal(0.0, 1.0)
    for i in range(1, n_hours + 1):
        logit[i] = persistence * logit[i - 1] + volatility * rng.standard_normal()
    return low + (high - low) / (1.0 + np.exp(-logit))


def _sample_forecast(knots: np.ndarray, knot_every: int) -> np.ndarray:
    n = (len(knots) - 1) * knot_every
    return np.interp(np.arange(n + 1) / knot_every, np.arange(len(knots)), knots)


def _simulate_x(params: ModelParams, p_raw: np.ndarray, knot_every: int, delta_hours: float, epsilon: float,
                seed: int, substeps: int, delta: Optional[float]) -> np.ndarray:
    idx = np.arange(0, len(p_raw), knot_every)
    times = np.arange(len(p_raw)) * delta_hours
    curve = ForecastCurve(knot_times=times[idx], knot_values=np.asarray(truncate_forecast(p_raw[idx], epsilon)),
                          epsilon=epsilon)
    cfg = SimConfig(n_paths=1, substeps=substeps, seed=seed)
    bundle = simulate_paths(params, curve, times, cfg, v0=0.0, delta=delta)
    return np.clip(bundle.paths[0], 0.0, 1.0)


def simulate_segment_set(params: ModelParams, n_segments: int, n_steps: int = 144, delta_minutes: float = 10.0,
                         knot_every: int = 6, seed: int = 0, epsilon: float = DEFAULT_EPSILON,
                         delta: Optional[float] = None, provider: str = "synthetic", substeps: int = 10,
                         role: str = "all") -> SegmentSet:
    """`n_segments` independent daily segments of n_steps + 1 samples simulated from `params`.

    Each segment starts at zero error unless `delta` is given, in which case its
    first sample is drawn from the δ-transition.
    """
    if n_steps % knot_every:
        raise ValueError("n_steps must be a multiple of knot_every")
    delta_hours = delta_minutes / 60.0
    start = pd.Timestamp(SYNTHETIC_START)
    segments = []
    for j in range(n_segments):
        knots = random_forecast_knots(n_steps // knot_every, derive_seed(seed, j, 0))
        p_raw = _sample_forecast(knots, knot_every)
        x = _simulate_x(params, p_raw, knot_every, delta_hours, epsilon, derive_seed(seed, j, 1), substeps, delta)
        day = start + pd.Timedelta(days=j)
        segments.append(Segment(
            id=f"{provider}-{day.strftime('%Y%m%dT%H%M')}",
            provider=provider,
            start=day.isoformat(),
            delta_hours=delta_hours,
            x=x,
            p_raw=p_raw,
            knot_every=knot_every,
        ))
    logger.debug("simulated %d synthetic segments for %s", n_segments, params)
    return SegmentSet(segments, role=role)


def synthetic_series(params: ModelParams, n_days: int, providers: Sequence[str] = ("synthetic",), seed: int = 0,
                     curtailed_days: Iterable[int] = (), delta_minutes: float = 10.0, epsilon: float = DEFAULT_EPSILON,
                     substeps: int = 10) -> NormalizedSeries:
    """A continuous n_days series starting at 13:00 UTC with one forecast per provider.

    Production follows the first provider's forecast. Each day in
    `curtailed_days` gets a two-hour production plateau well below the forecast.
    """
    per_hour = int(round(60.0 / delta_minutes))
    n_hours = 24 * n_days
    curtailed = sorted(set(curtailed_days))
    forecasts = {}
    for k, name in enumerate(providers):
        knots = random_forecast_knots(n_hours, derive_seed(seed, k, 0))
        for day in curtailed:
            knots[24 * day + _CURTAIL_HOURS[0]:24 * day + _CURTAIL_HOURS[1] + 1] = _CURTAIL_FORECAST
        forecasts[name] = _sample_forecast(knots, per_hour)
    lead = providers[0]
    x = _simulate_x(params, forecasts[lead], per_hour, delta_minutes / 60.0, epsilon, derive_seed(seed, 0, 1), substeps, None)
    for day in curtailed:
        lo = (24 * day + _CURTAIL_HOURS[0]) * per_hour
        hi = (24 * day + _CURTAIL_HOURS[1]) * per_hour
        x[lo:hi + 1] = _CURTAIL_LEVEL
    timestamps = pd.date_range(pd.Timestamp(SYNTHETIC_START), periods=len(x), freq=pd.Timedelta(minutes=delta_minutes))
    return NormalizedSeries(timestamps=timestamps, production=x, forecasts=forecasts)


def write_raw_csv(path: Union[str, Path], series: NormalizedSeries, capacity: float) -> None:
    """Emit `timestamp,production_mw,forecast_mw,provider` rows, one per provider and instant"""
    frames: List[pd.DataFrame] = []
    for provider in sorted(series.forecasts):
        frames.append(pd.DataFrame({
            "timestamp": series.timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "production_mw": series.production * capacity,
            "forecast_mw": series.forecasts[provider] * capacity,
            "provider": provider,
        }))
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.6f", encoding="utf-8")
