"""Ingestion and preprocessing of production/forecast series.

Times inside a segment are measured in hours from the segment start.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import DataError, DomainError

logger = logging.getLogger("jacobicast.forecast")

REQUIRED_COLUMNS = ("timestamp", "production_mw", "forecast_mw")
DEFAULT_PROVIDER = "default"
DEFAULT_EPSILON = 0.02


@dataclass
class RawSeries:
    """Production and per-provider forecasts on a common, strictly increasing UTC time axis"""
    timestamps: pd.DatetimeIndex
    production: np.ndarray
    forecasts: Dict[str, np.ndarray]
    capacity: float
    rejected_lines: List[int] = field(default_factory=list)
    source: Optional[str] = None

    def __post_init__(self):
        if not self.forecasts:
            raise DataError("at least one forecast provider is required", path=self.source)
        if not self.timestamps.is_monotonic_increasing or self.timestamps.has_duplicates:
            raise DataError("timestamps must be strictly increasing", path=self.source)
        for provider, values in self.forecasts.items():
            if len(values) != len(self.production):
                raise DataError(f"forecast for provider '{provider}' does not match the production length", path=self.source)


@dataclass
class NormalizedSeries:
    timestamps: pd.DatetimeIndex
    production: np.ndarray
    forecasts: Dict[str, np.ndarray]
    n_clamped: int = 0


@dataclass(eq=False)
class Segment:
    """One contiguous observation window with N+1 equispaced samples"""
    id: str
    provider: str
    start: str
    delta_hours: float
    x: np.ndarray
    p_raw: np.ndarray
    knot_every: int = 6
    curtailed: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p_raw = np.asarray(self.p_raw, dtype=float)
        if self.delta_hours <= 0:
            raise DataError(f"segment {self.id}: sample spacing must be positive")
        if len(self.x) != len(self.p_raw):
            raise DataError(f"segment {self.id}: production and forecast lengths differ")
        if np.any((self.x < 0.0) | (self.x > 1.0)) or np.any(~np.isfinite(self.x)):
            raise DataError(f"segment {self.id}: normalized production must lie in [0, 1]")
        if self.knot_every < 1:
            raise DataError(f"segment {self.id}: knot_every must be at least 1")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.x)) * self.delta_hours

    @property
    def n_transitions(self) -> int:
        return max(len(self.x) - 1, 0)

    @property
    def start_time(self) -> pd.Timestamp:
        return pd.Timestamp(self.start)

    def knot_indices(self) -> np.ndarray:
        idx = np.arange(0, len(self.x), self.knot_every)
        if len(self.x) and idx[-1] != len(self.x) - 1:
            idx = np.append(idx, len(self.x) - 1)
        return idx

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "provider": self.provider,
            "start": self.start,
            "delta_seconds": round(self.delta_hours * 3600.0, 6),
            "knot_every": self.knot_every,
            "x": [float(v) for v in self.x],
            "p_raw": [float(v) for v in self.p_raw],
            "curtailed": bool(self.curtailed),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Segment':
        try:
            return cls(
                id=str(data["id"]),
                provider=str(data.get("provider", DEFAULT_PROVIDER)),
                start=str(data["start"]),
                delta_hours=float(data["delta_seconds"]) / 3600.0,
                x=np.asarray(data["x"], dtype=float),
                p_raw=np.asarray(data["p_raw"], dtype=float),
                knot_every=int(data.get("knot_every", 6)),
                curtailed=bool(data.get("curtailed", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed segment record: {e}")


@dataclass(frozen=True, eq=False)
class ForecastCurve:
    """Piecewise-linear truncated forecast through (time, value) knots"""
    knot_times: np.ndarray
    knot_values: np.ndarray
    epsilon: float

    def __post_init__(self):
        if len(self.knot_times) < 2:
            raise DataError("a forecast curve needs at least two knots")
        if np.any(np.diff(self.knot_times) <= 0):
            raise DataError("forecast knot times must be strictly increasing")

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.knot_values) / np.diff(self.knot_times)

    @property
    def start(self) -> float:
        return float(self.knot_times[0])

    @property
    def end(self) -> float:
        return float(self.knot_times[-1])

    def value(self, t):
        return np.interp(t, self.knot_times, self.knot_values)

    def slope(self, t):
        """Right-continuous derivative; the last knot takes the last interval's slope"""
        idx = np.searchsorted(self.knot_times, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.knot_times) - 2)
        out = self.slopes[idx]
        return float(out) if np.ndim(out) == 0 else out

    def interior_knots(self, t0: float, t1: float) -> np.ndarray:
        k = self.knot_times
        return k[(k > t0) & (k < t1)]


@dataclass
class SegmentSet:
    segments: List[Segment]
    role: str = "all"
    _cache: Dict[tuple, object] = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def n_transitions(self) -> int:
        return sum(s.n_transitions for s in self.segments)

    @property
    def providers(self) -> List[str]:
        return sorted({s.provider for s in self.segments})

    @property
    def delta_hours(self) -> float:
        if not self.segments:
            raise DataError(f"{self.role} set is empty")
        return self.segments[0].delta_hours

    def for_provider(self, provider: str) -> 'SegmentSet':
        return SegmentSet([s for s in self.segments if s.provider == provider], role=self.role)

    def retained(self) -> 'SegmentSet':
        return SegmentSet([s for s in self.segments if not s.curtailed], role=self.role)

    def prepared(self, epsilon: float) -> List['PreparedSegment']:
        """Curves and errors for every segment, built once per truncation level"""
        return self.memo(("prepared", float(epsilon)), lambda: [PreparedSegment.build(s, epsilon) for s in self.segments])

    def memo(self, key: tuple, factory):
        """Data-only derived structures (curves, integration grids) are built once per key"""
        if key not in self._cache:
            self._cache[key] = factory()
        return self._cache[key]


@dataclass(frozen=True, eq=False)
class PreparedSegment:
    segment: Segment
    curve: ForecastCurve
    errors: np.ndarray

    @classmethod
    def build(cls, segment: Segment, epsilon: float) -> 'PreparedSegment':
        curve = build_curve(segment, epsilon)
        return cls(segment=segment, curve=curve, errors=compute_errors(segment, curve))

    @property
    def times(self) -> np.ndarray:
        return self.segment.times


def check_epsilon(epsilon: float) -> float:
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {epsilon!r}")
    return float(epsilon)


def read_raw_csv(path: Union[str, Path], capacity: float) -> RawSeries:
    """Parse `timestamp,production_mw,forecast_mw[,provider]`; rows with missing or bad fields are dropped.

    Without a provider column the file stem names the provider.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"cannot read CSV: {e}", path=str(path))
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"missing columns {missing}", path=str(path))
    if "provider" not in frame.columns:
        frame["provider"] = path.stem

    line_numbers = np.arange(len(frame)) + 2
    stamps = pd.to_datetime(frame["timestamp"].str.strip(), utc=True, errors="coerce")
    production = pd.to_numeric(frame["production_mw"].str.strip(), errors="coerce")
    forecast = pd.to_numeric(frame["forecast_mw"].str.strip(), errors="coerce")
    provider = frame["provider"].str.strip()
    bad = stamps.isna() | production.isna() | forecast.isna() | (provider == "")
    bad = bad.to_numpy() | (production.to_numpy() < 0) | (forecast.to_numpy() < 0)
    rejected = [int(n) for n in line_numbers[bad]]
    if rejected:
        logger.warning("%s: rejected %d rows with missing or invalid fields (lines %s)",
                       path, len(rejected), ", ".join(map(str, rejected[:10])))

    good = pd.DataFrame({
        "timestamp": stamps[~bad].to_numpy(),
        "production": production[~bad].to_numpy(dtype=float),
        "forecast": forecast[~bad].to_numpy(dtype=float),
        "provider": provider[~bad].to_numpy(),
    })
    if good.empty:
        raise DataError("no usable rows", path=str(path), line_numbers=rejected)
    if good.duplicated(["timestamp", "provider"]).any():
        raise DataError("duplicate timestamps for a provider", path=str(path))

    wide = good.pivot(index="timestamp", columns="provider", values="forecast").sort_index()
    production_series = good.groupby("timestamp")["production"].first().reindex(wide.index)
    complete = wide.notna().all(axis=1)
    if not complete.all():
        logger.warning("%s: dropped %d timestamps not covered by every provider", path, int((~complete).sum()))
    wide = wide[complete]
    return RawSeries(
        timestamps=pd.DatetimeIndex(wide.index),
        production=production_series[complete].to_numpy(dtype=float),
        forecasts={str(c): wide[c].to_numpy(dtype=float) for c in wide.columns},
        capacity=float(capacity),
        rejected_lines=rejected,
        source=str(path),
    )


def merge_raw(series: Sequence[RawSeries]) -> RawSeries:
    """Combine several files (typically one per provider) on their common timestamps"""
    if len(series) == 1:
        return series[0]
    frames = []
    for raw in series:
        frame = pd.DataFrame(raw.forecasts, index=raw.timestamps)
        frame["__production"] = raw.production
        frames.append(frame)
    index = frames[0].index
    for frame in frames[1:]:
        index = index.intersection(frame.index)
    if len(index) == 0:
        raise DataError("input files share no timestamps")
    forecasts: Dict[str, np.ndarray] = {}
    for frame in frames:
        for col in frame.columns:
            if col != "__production":
                if col in forecasts:
                    raise DataError(f"provider '{col}' appears in more than one file")
                forecasts[col] = frame.loc[index, col].to_numpy(dtype=float)
    return RawSeries(
        timestamps=index,
        production=frames[0].loc[index, "__production"].to_numpy(dtype=float),
        forecasts=forecasts,
        capacity=series[0].capacity,
        rejected_lines=[n for raw in series for n in raw.rejected_lines],
    )


def normalize(raw: RawSeries) -> NormalizedSeries:
    """Divide every power value by the installed capacity, clamping into [0, 1]"""
    if not raw.capacity or raw.capacity <= 0:
        raise DataError(f"capacity must be positive, got {raw.capacity!r}", path=raw.source)
    production = raw.production / raw.capacity
    forecasts = {k: v / raw.capacity for k, v in raw.forecasts.items()}
    n_clamped = int(np.count_nonzero(production > 1.0)) + sum(int(np.count_nonzero(f > 1.0)) for f in forecasts.values())
    if n_clamped:
        logger.warning("%d values above capacity were clamped to 1", n_clamped)
    return NormalizedSeries(
        timestamps=raw.timestamps,
        production=np.clip(production, 0.0, 1.0),
        forecasts={k: np.clip(v, 0.0, 1.0) for k, v in forecasts.items()},
        n_clamped=n_clamped,
    )


def truncate_forecast(p, epsilon: float):
    """Clamp a forecast into [ε, 1 − ε]"""
    epsilon = check_epsilon(epsilon)
    p = np.asarray(p, dtype=float)
    out = np.where(p < epsilon, epsilon, np.where(p >= 1.0 - epsilon, 1.0 - epsilon, p))
    return float(out) if out.ndim == 0 else out


def build_curve(segment: Segment, epsilon: float) -> ForecastCurve:
    idx = segment.knot_indices()
    if len(idx) < 2:
        raise DataError(f"segment {segment.id}: fewer than two forecast knots")
    return ForecastCurve(
        knot_times=segment.times[idx],
        knot_values=np.asarray(truncate_forecast(segment.p_raw[idx], epsilon), dtype=float),
        epsilon=epsilon,
    )


def segment_series(
    series: NormalizedSeries,
    delta_minutes: float = 10.0,
    segment_hours: float = 24.0,
    start_hour: float = 13.0,
    forecast_minutes: float = 60.0,
) -> List[Segment]:
    """Cut a normalized series into complete daily windows anchored at `start_hour` UTC"""
    n_steps = int(round(segment_hours * 60.0 / delta_minutes))
    knot_every = max(int(round(forecast_minutes / delta_minutes)), 1)
    if n_steps < 1:
        raise DataError("segment length must cover at least one sampling interval")
    if len(series.timestamps) == 0:
        return []
    position = pd.Series(np.arange(len(series.timestamps)), index=series.timestamps)
    first_day = series.timestamps[0].normalize() - pd.Timedelta(days=1)
    last_day = series.timestamps[-1].normalize()
    step = pd.Timedelta(minutes=delta_minutes)
    anchor = pd.Timedelta(hours=start_hour)

    segments = []
    for day in pd.date_range(first_day, last_day, freq="D"):
        start = day + anchor
        wanted = pd.date_range(start, periods=n_steps + 1, freq=step)
        rows = position.reindex(wanted)
        if rows.isna().any():
            continue
        rows = rows.to_numpy(dtype=int)
        for provider in sorted(series.forecasts):
            segments.append(Segment(
                id=f"{provider}-{start.strftime('%Y%m%dT%H%M')}",
                provider=provider,
                start=start.isoformat(),
                delta_hours=delta_minutes / 60.0,
                x=series.production[rows],
                p_raw=series.forecasts[provider][rows],
                knot_every=knot_every,
            ))
    return segments


def detect_curtailment(segment: Segment, plateau_len: int = 9, flat_tol: float = 0.005, gap_tol: float = 0.1) -> bool:
    """True when production sits on a flat plateau well below the forecast.

    A flagged run has at least `plateau_len` samples whose range is within
    `flat_tol` while forecast − production exceeds `gap_tol` on every sample.
    """
    if plateau_len < 1 or len(segment.x) < plateau_len:
        return False
    windows = np.lib.stride_tricks.sliding_window_view(segment.x, plateau_len)
    gaps = np.lib.stride_tricks.sliding_window_view(segment.p_raw - segment.x, plateau_len)
    flat = windows.max(axis=1) - windows.min(axis=1) <= flat_tol
    below = np.all(gaps > gap_tol, axis=1)
    return bool(np.any(flat & below))


def split_train_test(segments: Iterable[Segment]) -> Tuple[SegmentSet, SegmentSet]:
    """Alternate chronologically: even positions train, odd positions test"""
    ordered = sorted(segments, key=lambda s: (s.start_time, s.provider, s.id))
    if len(ordered) < 2:
        raise DataError(f"cannot split {len(ordered)} segment(s) into training and test sets")
    return SegmentSet(ordered[0::2], role="train"), SegmentSet(ordered[1::2], role="test")


def split_by_provider(segments: Iterable[Segment]) -> Tuple[SegmentSet, SegmentSet]:
    """Alternate days within each provider so every provider gets the same calendar split"""
    train, test = [], []
    by_provider: Dict[str, List[Segment]] = {}
    for segment in segments:
        by_provider.setdefault(segment.provider, []).append(segment)
    for provider in sorted(by_provider):
        tr, te = split_train_test(by_provider[provider])
        train.extend(tr.segments)
        test.extend(te.segments)
    return SegmentSet(train, role="train"), SegmentSet(test, role="test")


def compute_errors(segment: Segment, curve: ForecastCurve) -> np.ndarray:
    """v_i = x_i − p(t_i)"""
    return segment.x - curve.value(segment.times)


def extrapolate_backward(curve: ForecastCurve, delta: float) -> float:
    """Forecast value δ before the first knot, extending the first interval linearly, truncated"""
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    p = curve.knot_values[0] - curve.slopes[0] * delta
    return float(np.clip(p, curve.epsilon, 1.0 - curve.epsilon))


def write_segments(path: Union[str, Path], segments: Sequence[Segment]) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in segments], indent=1), encoding="utf-8")


def read_segments(path: Union[str, Path]) -> List[Segment]:
    path = Path(path)
    try:
        records = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read segments: {e}", path=str(path))
    if not isinstance(records, list):
        raise DataError("segments file must hold a JSON array", path=str(path))
    return [Segment.from_dict(r) for r in records]
