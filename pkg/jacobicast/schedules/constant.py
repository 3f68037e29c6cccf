import numpy as np

from .base_schedule import ArrayLike, ThetaSchedule


class ConstantSchedule(ThetaSchedule):
    """θ_t ≡ θ0, independent of the forecast"""

    name = "constant"

    def rate(self, params, p: ArrayLike, p_dot: ArrayLike) -> ArrayLike:
        if np.ndim(p) == 0 and np.ndim(p_dot) == 0:
            return float(params.theta0)
        return np.full(np.broadcast(np.asarray(p), np.asarray(p_dot)).shape, float(params.theta0))
