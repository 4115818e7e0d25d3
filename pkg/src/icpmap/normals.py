"""Surface normal estimation from k-nearest-neighbor scatter matrices."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud

# neighborhoods whose mid eigenvalue collapses against the largest are
# treated as collinear and produce no usable normal
DEGENERATE_RATIO = 1e-9


def scatter_normals(
    query_points: np.ndarray,
    neighborhood_points: np.ndarray,
    tree: cKDTree,
    k: int,
    view_point=None,
    view_direction=(0.0, 0.0, 1.0),
) -> np.ndarray:
    """Normals for query points from the smallest-scatter direction of their
    k nearest neighbors in `neighborhood_points`.

    Degenerate neighborhoods yield NaN rows. Signs are flipped so each normal
    has a non-negative dot product with the local view direction (toward
    `view_point` if given, else the fixed `view_direction`).
    """
    query_points = np.asarray(query_points, dtype=float)
    _, idx = tree.query(query_points, k=k, workers=1)
    if k == 1:
        idx = idx[:, None]
    neigh = neighborhood_points[idx]  # (n, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    scatter = np.einsum("nki,nkj->nij", centered, centered)
    vals, vecs = np.linalg.eigh(scatter)
    normals = vecs[:, :, 0].copy()

    degenerate = vals[:, 1] <= DEGENERATE_RATIO * np.maximum(vals[:, 2], 0.0)
    degenerate |= vals[:, 2] <= 0.0
    normals[degenerate] = np.nan

    if view_point is not None:
        view = np.asarray(view_point, dtype=float) - query_points
    else:
        view = np.broadcast_to(np.asarray(view_direction, dtype=float), query_points.shape)
    flip = np.einsum("ni,ni->n", normals, view) < 0.0
    normals[flip] = -normals[flip]
    return normals


def estimate_normals(
    cloud: PointCloud,
    k: int = 15,
    view_point=None,
    view_direction=(0.0, 0.0, 1.0),
) -> PointCloud:
    """Return a copy of `cloud` with normals estimated from its own k-NN
    neighborhoods (the point itself counts as one neighbor).
    """
    if k < 3:
        raise ValueError("normal estimation needs k >= 3")
    if len(cloud) < k:
        raise ValueError(f"cloud has {len(cloud)} points, needs at least k={k}")
    tree = cKDTree(cloud.points)
    normals = scatter_normals(cloud.points, cloud.points, tree, k, view_point, view_direction)
    return PointCloud(cloud.points.copy(), normals, cloud.covariances)
