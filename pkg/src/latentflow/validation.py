"""Input-validation helpers shared by the public entry points."""
from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def check_array(x, name: str = "array", ndim: int | tuple[int, ...] | None = None, allow_empty: bool = False) -> np.ndarray:
    """Coerce to a float64 ndarray and validate finiteness and rank."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None:
        allowed = (ndim,) if isinstance(ndim, int) else tuple(ndim)
        if arr.ndim not in allowed:
            raise ValidationError(f"{name}: expected {allowed}-dimensional array, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValidationError(f"{name}: empty array")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains non-finite values")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"{op}: shapes {a.shape} and {b.shape} differ")


def check_latent(z, name: str = "latent") -> np.ndarray:
    """A latent trajectory is a finite [channels, frames] float64 array."""
    return check_array(z, name=name, ndim=2)


def check_positive_int(value, name: str) -> int:
    iv = int(value)
    if iv <= 0 or iv != value:
        raise ValidationError(f"{name}: expected a positive integer, got {value!r}")
    return iv


def check_unit_interval(t, name: str = "t") -> float:
    tf = float(t)
    if not 0.0 <= tf <= 1.0:
        raise ValidationError(f"{name}: expected a value in [0, 1], got {tf}")
    return tf
