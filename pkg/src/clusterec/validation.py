"""Input validation helpers for vectors and shared parameters."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


def as_vector(values, name: str = "embedding") -> np.ndarray:
    """Coerce to a finite 1-D float64 array without copying when possible."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_dimension(vec: np.ndarray, dimension: int, name: str = "embedding") -> None:
    if vec.shape[0] != dimension:
        raise ValidationError(
            f"{name} has dimension {vec.shape[0]}, expected {dimension}"
        )


def check_nonzero(vec: np.ndarray, name: str = "embedding") -> float:
    """Return the Euclidean norm, rejecting (near-)zero vectors."""
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        raise ValidationError(f"{name} is a zero vector")
    return norm


def l2_normalize(values, name: str = "embedding") -> np.ndarray:
    """Return a unit-norm copy; raises on zero vectors."""
    vec = as_vector(values, name)
    norm = check_nonzero(vec, name)
    return vec / norm


def check_positive_int(value: int, name: str, minimum: int = 1) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
