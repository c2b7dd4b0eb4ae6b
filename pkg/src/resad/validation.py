"""Small input-validation helpers shared by the numerical core."""

from __future__ import annotations

import numpy as np


def ensure_matrix(a, name: str) -> np.ndarray:
    """Coerce to a 2-D float64 array, C-ordered."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def ensure_vector(a, name: str) -> np.ndarray:
    """Coerce to a 1-D float64 array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got ndim={a.ndim}")
    return a


def ensure_square(a, name: str) -> np.ndarray:
    a = ensure_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a
