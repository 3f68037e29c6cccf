from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Union

import numpy as np

if TYPE_CHECKING:
    from jacobicast.model import ModelParams

ArrayLike = Union[float, np.ndarray]


class ThetaSchedule(ABC):
    """Mean-reversion rate θ_t as a function of the instantaneous forecast and its slope"""

    name: str = "base"

    @abstractmethod
    def rate(self, params: 'ModelParams', p: ArrayLike, p_dot: ArrayLike) -> ArrayLike:
        """Return θ_t for forecast value(s) p and derivative(s) p_dot"""
        pass

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"

    def __eq__(self, other) -> bool:
        return type(self) is type(other)

    def __hash__(self) -> int:
        return hash(type(self))
