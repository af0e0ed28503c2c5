"""Input validation helpers shared by the estimators and the harness."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigError


def check_positive(value, name, *, strict=True, allow_inf=False) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    v = float(value)
    if np.isnan(v) or (not allow_inf and np.isinf(v)):
        raise ConfigError(f"{name} must be finite, got {value!r}")
    if v < 0 or (strict and v == 0):
        raise ConfigError(f"{name} must be {'> 0' if strict else '>= 0'}, got {value!r}")
    return v


def check_count(value, name, *, minimum=0) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_seed(value, name="random_state") -> int:
    if value is None:
        return 0
    v = check_count(value, name)
    if v >= 2**64:
        raise ConfigError(f"{name} must fit in 64 bits")
    return v


def check_positions(X, dim=None, name="X") -> np.ndarray:
    """2-D float array of particle positions, optionally with a fixed width."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1 and dim == 1:
        arr = arr[:, None]
    arr = check_array(arr, dtype=np.float64, ensure_all_finite=True, input_name=name)
    if dim is not None and arr.shape[1] != dim:
        raise ConfigError(f"{name} has {arr.shape[1]} columns, expected {dim}")
    return arr


def check_init_mean(init_mean, dim) -> tuple:
    if init_mean is None:
        return (0.0,) * dim
    mean = np.atleast_1d(np.asarray(init_mean, dtype=np.float64))
    if mean.size == 1 and dim > 1:
        mean = np.full(dim, float(mean[0]))
    if mean.shape != (dim,) or not np.isfinite(mean).all():
        raise ConfigError(f"init_mean must be a finite vector of length {dim}")
    return tuple(mean.tolist())
