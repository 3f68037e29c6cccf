from .base_schedule import ThetaSchedule
from .constant import ConstantSchedule
from .forecast_bound import ForecastBoundSchedule

SCHEDULES = {
    ForecastBoundSchedule.name: ForecastBoundSchedule,
    ConstantSchedule.name: ConstantSchedule,
}


def get_schedule(name: str) -> ThetaSchedule:
    """Look up a θ_t schedule by its registry name"""
    try:
        return SCHEDULES[name]()
    except KeyError:
        from jacobicast.errors import ConfigError
        raise ConfigError(f"unknown theta schedule '{name}', expected one of {sorted(SCHEDULES)}")


__all__ = ['ThetaSchedule', 'ConstantSchedule', 'ForecastBoundSchedule', 'SCHEDULES', 'get_schedule']
