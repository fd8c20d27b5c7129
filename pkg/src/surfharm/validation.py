"""Input validation helpers.

Small check_* utilities used at public entry points so that malformed
arrays fail with a clear message instead of deep inside a solver.
"""

from __future__ import annotations

import numpy as np


def as_float_matrix(values, name="array", n_cols=None):
    """Coerce to a 2D float64 array, raising ValueError on bad shape/values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1D or 2D, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {arr.shape[1]}")
    return arr


def check_finite(arr, name="array"):
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_vertex_field(values, n_vertices, name="field"):
    """Validate per-vertex channel data: (n_vertices, n_channels) float64, finite."""
    arr = as_float_matrix(values, name)
    if arr.shape[0] != n_vertices:
        raise ValueError(
            f"{name} has {arr.shape[0]} rows but the mesh has {n_vertices} vertices"
        )
    return check_finite(arr, name)


def check_points(points, name="points", min_points=1):
    """Validate an (m, 3) coordinate array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (m, 3), got {arr.shape}")
    if arr.shape[0] < min_points:
        raise ValueError(f"{name} needs at least {min_points} rows, got {arr.shape[0]}")
    return check_finite(arr, name)


def check_index_array(indices, n, name="indices"):
    """Validate integer vertex indices against a container of size n."""
    idx = np.asarray(indices)
    if idx.dtype == bool:
        if idx.shape != (n,):
            raise ValueError(f"boolean {name} must have length {n}, got {idx.shape}")
        return np.flatnonzero(idx)
    idx = idx.astype(np.int64, casting="safe") if idx.size else idx.astype(np.int64)
    if idx.ndim != 1:
        raise ValueError(f"{name} must be 1D")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"{name} out of range for size {n}")
    return idx


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_non_negative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be non-negative and finite, got {value}")
    return value
