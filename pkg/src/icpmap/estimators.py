"""scikit-learn style front ends so the registration core composes with
pipelines, grid search and `clone`."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .geometry import RigidTransform
from .normals import estimate_normals, scatter_normals
from .registration import IcpConfig, icp
from .validation import as_cloud, check_points


class IcpRegistration(TransformerMixin, BaseEstimator):
    """Rigid registration estimator.

    fit(X, y) aligns the scan points X (n, 3) to the reference y (a
    PointCloud or (m, 3) array; normals are estimated when missing) and
    stores the scan-to-reference transform in `transformation_`.
    transform(X) applies the fitted transform to points.
    """

    def __init__(
        self,
        max_iterations=40,
        translation_epsilon=1e-4,
        rotation_epsilon=1e-5,
        outlier="trimmed",
        trim_ratio=0.85,
        cauchy_scale=1.0,
        scale_s=1.0 / 0.03**2,
        normal_k=15,
        prior=None,
        penalties=None,
    ):
        self.max_iterations = max_iterations
        self.translation_epsilon = translation_epsilon
        self.rotation_epsilon = rotation_epsilon
        self.outlier = outlier
        self.trim_ratio = trim_ratio
        self.cauchy_scale = cauchy_scale
        self.scale_s = scale_s
        self.normal_k = normal_k
        self.prior = prior
        self.penalties = penalties

    def _config(self) -> IcpConfig:
        return IcpConfig(
            max_iterations=self.max_iterations,
            translation_epsilon=self.translation_epsilon,
            rotation_epsilon=self.rotation_epsilon,
            outlier=self.outlier,
            trim_ratio=self.trim_ratio,
            cauchy_scale=self.cauchy_scale,
            scale_s=self.scale_s,
        )

    def fit(self, X, y):
        scan = as_cloud(X, "X")
        reference = as_cloud(y, "y")
        if reference.normals is None:
            reference = estimate_normals(reference, k=min(self.normal_k, len(reference)))
        prior = self.prior if self.prior is not None else RigidTransform.identity()
        penalties = self.penalties if self.penalties is not None else ()
        estimate, diag = icp(scan, reference, prior, penalties, self._config())
        self.transformation_ = estimate
        self.n_iter_ = diag.iterations
        self.converged_ = diag.converged
        self.residual_ = diag.objective
        self.match_count_ = diag.match_count
        return self

    def transform(self, X):
        if not hasattr(self, "transformation_"):
            raise NotFittedError("IcpRegistration is not fitted")
        return self.transformation_.apply(check_points(X, "X"))


class NormalEstimator(TransformerMixin, BaseEstimator):
    """Surface-normal transformer.

    fit(X) stores the neighborhood cloud; transform(Q) returns the (m, 3)
    normals of query points Q estimated from their k nearest neighbors in the
    fitted cloud (NaN rows for degenerate neighborhoods). fit_transform(X)
    is the usual per-cloud normal estimation.
    """

    def __init__(self, k=15, view_point=None, view_direction=(0.0, 0.0, 1.0)):
        self.k = k
        self.view_point = view_point
        self.view_direction = view_direction

    def fit(self, X, y=None):
        points = check_points(X, "X")
        if self.k < 3:
            raise ValueError("k must be >= 3")
        if len(points) < self.k:
            raise ValueError(f"need at least k={self.k} points, got {len(points)}")
        self.points_ = points
        self.tree_ = cKDTree(points)
        return self

    def transform(self, X):
        if not hasattr(self, "tree_"):
            raise NotFittedError("NormalEstimator is not fitted")
        query = check_points(X, "X")
        return scatter_normals(
            query,
            self.points_,
            self.tree_,
            self.k,
            view_point=self.view_point,
            view_direction=np.asarray(self.view_direction, dtype=float),
        )
