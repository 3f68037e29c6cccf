"""θ_t = max(θ0, (αθ0 + |ṗ|) / min(p, 1 − p))"""
import numpy as np

from .base_schedule import ArrayLike, ThetaSchedule


class ForecastBoundSchedule(ThetaSchedule):
    """Smallest rate at least θ0 that keeps both boundaries unattainable.

    The second argument of the max dominates both sides of the boundary
    condition, (αθ0 + ṗ)/(1 − p) and (αθ0 − ṗ)/p, for either sign of ṗ.
    """

    name = "forecast_bound"

    def rate(self, params, p: ArrayLike, p_dot: ArrayLike) -> ArrayLike:
        scale = params.alpha * params.theta0
        bound = (scale + np.abs(p_dot)) / np.minimum(p, 1.0 - p)
        return np.maximum(params.theta0, bound)
