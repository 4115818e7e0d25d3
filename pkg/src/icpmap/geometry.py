"""Fixed-size 3D geometry kernels: rotations, rigid transforms, symmetric 3x3 eigensystems."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovarianceError

_EYE3 = np.eye(3)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(float(a), math.tau)
    return math.pi if a <= -math.pi else a


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def rotation_from_axis_angle(omega: np.ndarray) -> np.ndarray:
    """Rodrigues exponential of a rotation vector, stable near zero angle."""
    omega = np.asarray(omega, dtype=float)
    theta2 = float(omega @ omega)
    theta = math.sqrt(theta2)
    k = skew(omega)
    if theta < 1e-8:
        # second-order Taylor of sin(t)/t and (1-cos t)/t^2
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    return _EYE3 + a * k + b * (k @ k)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in [0, pi]."""
    c = (float(np.trace(r)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (closest rotation in Frobenius norm)."""
    u, _, vt = np.linalg.svd(r)
    if np.linalg.det(u @ vt) < 0.0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
    return u @ vt


def euler_zyx_to_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rotation from intrinsic z-y-x Euler angles (yaw about z applied last)."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def matrix_to_euler_zyx(r: np.ndarray) -> tuple[float, float, float]:
    """Inverse of euler_zyx_to_matrix; returns (yaw, pitch, roll)."""
    sp = -float(r[2, 0])
    sp = min(1.0, max(-1.0, sp))
    pitch = math.asin(sp)
    if abs(sp) > 1.0 - 1e-12:
        # gimbal lock: fold roll into yaw
        yaw = math.atan2(-float(r[0, 1]), float(r[1, 1]))
        roll = 0.0
    else:
        yaw = math.atan2(float(r[1, 0]), float(r[0, 0]))
        roll = math.atan2(float(r[2, 1]), float(r[2, 2]))
    return yaw, pitch, roll


def heading_of_rotation(r: np.ndarray) -> float:
    """Angle of the body-forward (+x) axis projected on the x-y plane."""
    return math.atan2(float(r[1, 0]), float(r[0, 0]))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose: p_out = rotation @ p_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(_EYE3.copy(), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return RigidTransform(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform applying `other` first, then `self`."""
        r = self.rotation @ other.rotation
        drift = np.abs(r.T @ r - _EYE3).max()
        if drift > 1e-12:
            r = orthonormalize(r)
        return RigidTransform(r, self.rotation @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Apply to a single (3,) point or an (n, 3) batch."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return self.rotation @ points + self.translation
        return points @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def validate(self, tol: float = 1e-9) -> None:
        if not np.isfinite(self.rotation).all() or not np.isfinite(self.translation).all():
            raise ValueError("transform has non-finite entries")
        if np.abs(self.rotation.T @ self.rotation - _EYE3).max() > tol:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > tol:
            raise ValueError("rotation determinant is not +1")


def symmetrize(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    return 0.5 * (w + w.T)


def eig_sym3(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric 3x3 matrix.

    Returns (eigenvalues ascending, matrix with eigenvectors as columns) so
    that vecs @ diag(vals) @ vecs.T reconstructs the input.
    """
    w = symmetrize(w)
    if not np.isfinite(w).all():
        raise ValueError("eig_sym3 requires finite entries")
    return np.linalg.eigh(w)


def mahalanobis_sq(e: np.ndarray, w: np.ndarray) -> float:
    """Squared Mahalanobis distance e^T W^-1 e for positive-definite W."""
    e = np.asarray(e, dtype=float).reshape(3)
    w = symmetrize(w)
    try:
        chol = np.linalg.cholesky(w)
    except np.linalg.LinAlgError:
        raise DegenerateCovarianceError("covariance is singular or not positive definite")
    y = np.linalg.solve(chol, e)
    return float(y @ y)


def is_positive_definite(w: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(symmetrize(w))
    except np.linalg.LinAlgError:
        return False
    return True


def diag_cov(sx: float, sy: float, sz: float) -> np.ndarray:
    """Diagonal covariance from per-axis standard deviations."""
    return np.diag([sx * sx, sy * sy, sz * sz])
