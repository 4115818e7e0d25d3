"""Input validation helpers for the public estimator API."""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud


def check_points(x, name: str = "X") -> np.ndarray:
    """Coerce to a finite (n, 3) float array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and x.shape == (3,):
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"{name} must be an (n, 3) array, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def as_cloud(data, name: str = "X") -> PointCloud:
    """Accept a PointCloud or an (n, 3) array."""
    if isinstance(data, PointCloud):
        return data
    return PointCloud(check_points(data, name))
