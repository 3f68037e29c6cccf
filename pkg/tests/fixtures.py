import functools

import numpy as np

from jacobicast.forecast import DEFAULT_EPSILON, ForecastCurve, Segment, SegmentSet
from jacobicast.model import ModelParams
from jacobicast.synthetic import simulate_segment_set

TEN_MINUTES = 1.0 / 6.0
REFERENCE = ModelParams(theta0=1.9, alpha=0.05)


def make_segment(x, p_raw, delta_hours=TEN_MINUTES, knot_every=1, seg_id="seg", provider="synthetic",
                 start="2019-04-01T13:00:00+00:00", curtailed=False) -> Segment:
    return Segment(id=seg_id, provider=provider, start=start, delta_hours=delta_hours, x=np.asarray(x, dtype=float),
                   p_raw=np.asarray(p_raw, dtype=float), knot_every=knot_every, curtailed=curtailed)


def constant_curve(p, end=1.0, epsilon=DEFAULT_EPSILON) -> ForecastCurve:
    return ForecastCurve(np.array([0.0, end]), np.array([p, p]), epsilon)


def ramp_curve(start=0.3, stop=0.7, hours=6.0, epsilon=DEFAULT_EPSILON) -> ForecastCurve:
    return ForecastCurve(np.array([0.0, hours]), np.array([start, stop]), epsilon)


@functools.lru_cache(maxsize=None)
def synthetic_set(n_segments=20, seed=11, theta0=1.9, alpha=0.05, n_steps=144, delta=None) -> SegmentSet:
    """Shared simulated training set; cached so the suite simulates each fixture once"""
    params = ModelParams(theta0=theta0, alpha=alpha)
    return simulate_segment_set(params, n_segments, n_steps=n_steps, seed=seed, delta=delta)
