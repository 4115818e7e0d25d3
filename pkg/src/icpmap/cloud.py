"""Point-cloud container and exact nearest-neighbor index."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloudError
from .geometry import RigidTransform


@dataclass
class PointCloud:
    """Points with optional per-point unit normals and 3x3 covariances.

    A normal row of NaNs marks a point whose neighborhood was too degenerate
    to orient; such points are skipped when building plane constraints.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    covariances: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (n, 3), got {pts.shape}")
        self.points = pts
        n = len(pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=float).reshape(n, 3)
            self.normals = nrm
        if self.covariances is not None:
            cov = np.asarray(self.covariances, dtype=float).reshape(n, 3, 3)
            self.covariances = cov

    def __len__(self) -> int:
        return len(self.points)

    def valid_normal_mask(self) -> np.ndarray:
        """Boolean mask of points that carry a usable (non-NaN) normal."""
        if self.normals is None:
            return np.zeros(len(self), dtype=bool)
        return ~np.isnan(self.normals).any(axis=1)

    def subset(self, index) -> "PointCloud":
        return PointCloud(
            self.points[index],
            None if self.normals is None else self.normals[index],
            None if self.covariances is None else self.covariances[index],
        )

    def transformed(self, t: RigidTransform) -> "PointCloud":
        """Rigidly move the cloud: rotates normals, conjugates covariances."""
        pts = t.apply(self.points)
        nrm = None if self.normals is None else self.normals @ t.rotation.T
        cov = None
        if self.covariances is not None:
            r = t.rotation
            cov = np.einsum("ij,njk,lk->nil", r, self.covariances, r)
        return PointCloud(pts, nrm, cov)

    def validate(self, tol: float = 1e-9) -> None:
        if not np.isfinite(self.points).all():
            raise ValueError("points contain non-finite values")
        if self.normals is not None:
            mask = self.valid_normal_mask()
            norms = np.linalg.norm(self.normals[mask], axis=1)
            if mask.any() and np.abs(norms - 1.0).max() > tol:
                raise ValueError("normals are not unit length")
        if self.covariances is not None:
            vals = np.linalg.eigvalsh(self.covariances)
            if (vals <= 0.0).any():
                raise ValueError("covariances are not positive definite")

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))


class NeighborIndex:
    """Immutable exact nearest-neighbor index (KD-tree) over fixed points."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("NeighborIndex needs (n, 3) points")
        if len(points) == 0:
            raise EmptyCloudError("cannot index an empty cloud")
        self.points = points
        self._tree = cKDTree(points)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, points: np.ndarray, k: int = 1):
        """Exact k nearest neighbors; returns (distances, indices).

        For k == 1 the outputs have shape (n,), otherwise (n, k) with
        neighbors ordered by increasing distance.
        """
        d, i = self._tree.query(np.asarray(points, dtype=float), k=k, workers=1)
        return d, i

    def query_ball(self, point: np.ndarray, radius: float) -> list:
        return sorted(self._tree.query_ball_point(np.asarray(point, dtype=float), radius))


def build_index(cloud: PointCloud | np.ndarray) -> NeighborIndex:
    """Build an exact nearest-neighbor index over a cloud's points."""
    points = cloud.points if isinstance(cloud, PointCloud) else cloud
    return NeighborIndex(points)
