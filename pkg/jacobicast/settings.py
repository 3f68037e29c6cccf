import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from dotenv import dotenv_values

from .errors import ConfigError
from .forecast import DEFAULT_EPSILON

CONFIG_ENV = "JACOBICAST_CONFIG"
DEBUG_ENV = "JACOBICAST_DEBUG"


@dataclass(frozen=True)
class Settings:
    """Every tunable of a run. Sources, highest precedence first: CLI flags, config file, these defaults."""
    epsilon: float = DEFAULT_EPSILON
    plateau_len: int = 9
    flat_tol: float = 0.005
    gap_tol: float = 0.1
    segment_hours: float = 24.0
    segment_start_hour: float = 13.0
    delta_minutes: float = 10.0
    capacity_mw: Optional[float] = None
    substeps: int = 20
    sim_substeps: int = 10
    n_paths: int = 5000
    levels: Tuple[float, ...] = (0.5, 0.9, 0.99)
    threads: int = 1
    seed: Optional[int] = None
    max_evals: int = 2000
    xtol: float = 1e-6
    ftol: float = 1e-8
    fp_max_iters: int = 25
    fp_tol: float = 1e-3
    damping: float = 0.5
    damping_iters: int = 2

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigError(f"epsilon must lie in (0, 1/2), got {self.epsilon!r}")
        for name in ("plateau_len", "substeps", "sim_substeps", "n_paths", "threads", "max_evals", "fp_max_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)!r}")
        if self.capacity_mw is not None and self.capacity_mw <= 0:
            raise ConfigError(f"capacity_mw must be positive, got {self.capacity_mw!r}")
        if any(not 0.0 <= level < 1.0 for level in self.levels):
            raise ConfigError(f"levels must lie in [0, 1), got {self.levels!r}")

    def merged(self, overrides: Dict[str, Any]) -> 'Settings':
        """Copy with the non-None entries of `overrides` applied"""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown settings {unknown}")
        return replace(self, **{k: _coerce(k, v) for k, v in overrides.items() if v is not None})

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["levels"] = list(self.levels)
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(Settings)}


def _coerce(name: str, value: Any) -> Any:
    kind = _FIELD_TYPES[name]
    try:
        if name == "levels":
            if isinstance(value, str):
                value = [v for v in value.replace(";", ",").split(",") if v.strip()]
            return tuple(float(v) for v in value)
        if isinstance(value, str) and value.strip().lower() in ("", "none"):
            return None
        if kind in (int, Optional[int]):
            return int(value)
        if kind in (float, Optional[float]):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot read {name}={value!r}")
    return value


def load_settings(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> Settings:
    """Defaults, then the key=value config file (`path`, else $JACOBICAST_CONFIG), then `overrides`"""
    settings = Settings()
    path = path or os.getenv(CONFIG_ENV)
    if path:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = {k.strip().lower(): v for k, v in dotenv_values(path).items()}
        settings = settings.merged(values)
    if overrides:
        settings = settings.merged(overrides)
    return settings


def debug_enabled() -> bool:
    return os.getenv(DEBUG_ENV, 'False') == 'True'
