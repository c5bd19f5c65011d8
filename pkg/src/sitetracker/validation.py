"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import DimensionMismatch


def as_point(p, name="point"):
    """Return ``p`` as a finite float array of shape (2,)."""
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise DimensionMismatch(f"{name} must have 2 coordinates, got shape {np.shape(p)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def as_points(X, name="points", allow_empty=False):
    """Return ``X`` as a finite float array of shape (n, 2)."""
    arr = np.asarray(X, dtype=float)
    if arr.size == 0 and allow_empty:
        return arr.reshape(0, 2)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DimensionMismatch(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def as_square(M, size, name="matrix"):
    arr = np.asarray(M, dtype=float)
    if arr.shape != (size, size):
        raise DimensionMismatch(f"{name} must have shape ({size}, {size}), got {arr.shape}")
    return arr


def check_symmetric(M, tol=1e-10, name="matrix"):
    M = np.asarray(M, dtype=float)
    if np.max(np.abs(M - M.T), initial=0.0) > tol * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def check_probability(p, name, open_interval=True):
    p = float(p)
    ok = 0.0 < p < 1.0 if open_interval else 0.0 <= p <= 1.0
    if not ok:
        raise ValueError(f"{name} must lie in {'(0, 1)' if open_interval else '[0, 1]'}, got {p}")
    return p


def check_positive(x, name, strict=True):
    x = float(x)
    if not np.isfinite(x) or (x <= 0 if strict else x < 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'non-negative'}, got {x}")
    return x


def sqdist(a, b):
    """Squared Euclidean distance along the last axis."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.sum(d * d, axis=-1)
