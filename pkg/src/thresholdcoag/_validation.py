"""Argument checks shared by the public API (sklearn ``check_*`` style)."""

from __future__ import annotations

import math
import numbers

import numpy as np


class ConfigError(ValueError):
    """Invalid parameter; ``field`` names the offending argument."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def check_count(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, numbers.Real) and float(value).is_integer():
            value = int(value)
        else:
            raise ConfigError(name, f"expected an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def check_particle(v, n: int) -> int:
    v = check_count(v, "particle")
    if v >= n:
        raise IndexError(f"particle {v} out of range for {n} particles")
    return v


def check_time(value, name: str = "t", allow_inf: bool = False) -> float:
    try:
        t = float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a time, got {value!r}") from None
    if math.isnan(t) or t < 0 or (math.isinf(t) and not allow_inf):
        raise ConfigError(name, f"must be a finite time >= 0, got {value!r}")
    return t


def check_probability(value, name: str = "p") -> float:
    p = float(value)
    if not 0.0 <= p <= 1.0:
        raise ConfigError(name, f"must lie in [0, 1], got {value!r}")
    return p


def check_rng(random_state) -> np.random.Generator:
    """Turn ``None``, a seed, a ``SeedSequence`` or a ``Generator`` into a ``Generator``."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    return np.random.default_rng(random_state)


def check_concentrations(c0, name: str = "c0") -> np.ndarray:
    """Nonnegative finite vector indexed from size 1 (``c0[0]`` is size 1)."""
    arr = np.asarray(c0, dtype=float)
    if arr.ndim != 1:
        raise ConfigError(name, "expected a 1-d concentration vector")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigError(name, "concentrations must be finite and nonnegative")
    return arr
