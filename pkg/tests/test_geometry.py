import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icpmap.errors import DegenerateCovarianceError
from icpmap.geometry import (
    RigidTransform,
    eig_sym3,
    euler_zyx_to_matrix,
    heading_of_rotation,
    mahalanobis_sq,
    matrix_to_euler_zyx,
    orthonormalize,
    rot_x,
    rot_y,
    rot_z,
    rotation_angle,
    rotation_from_axis_angle,
    wrap_angle,
)


def random_spd(rng, scale=1.0):
    a = rng.normal(size=(3, 3))
    return a @ a.T + scale * np.eye(3)


def test_compose_identity():
    i = RigidTransform.identity()
    out = i.compose(i)
    np.testing.assert_allclose(out.matrix(), np.eye(4))


def test_compose_inverse_is_identity():
    t = RigidTransform(rot_z(0.7) @ rot_x(-0.2), [1.0, -2.0, 3.0])
    out = t.compose(t.inverse())
    np.testing.assert_allclose(out.matrix(), np.eye(4), atol=1e-12)


def test_compose_rotations():
    quarter = RigidTransform(rot_z(math.pi / 2), np.zeros(3))
    half = quarter.compose(quarter)
    np.testing.assert_allclose(half.rotation, rot_z(math.pi), atol=1e-12)


def test_apply_identity():
    p = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(RigidTransform.identity().apply(p), p)


def test_apply_translation():
    t = RigidTransform(np.eye(3), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(t.apply(np.zeros(3)), [1.0, 0.0, 0.0])


def test_apply_rotation_z90():
    t = RigidTransform(rot_z(math.pi / 2), np.zeros(3))
    np.testing.assert_allclose(t.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_apply_batch_matches_single():
    t = RigidTransform(rot_y(0.3), [0.1, 0.2, 0.3])
    pts = np.random.default_rng(0).normal(size=(10, 3))
    batch = t.apply(pts)
    for i in range(10):
        np.testing.assert_allclose(batch[i], t.apply(pts[i]))


def test_compose_reorthonormalizes_drift():
    r = rot_z(0.1) + 1e-10 * np.ones((3, 3))
    t = RigidTransform(r, np.zeros(3))
    out = t.compose(t)
    np.testing.assert_allclose(out.rotation.T @ out.rotation, np.eye(3), atol=1e-12)


def test_eig_identity():
    vals, vecs = eig_sym3(np.eye(3))
    np.testing.assert_allclose(vals, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(3), atol=1e-12)


def test_eig_diagonal_sorted():
    vals, vecs = eig_sym3(np.diag([4.0, 1.0, 9.0]))
    np.testing.assert_allclose(vals, [1.0, 4.0, 9.0])
    # eigenvector of the smallest eigenvalue is the y axis
    np.testing.assert_allclose(np.abs(vecs[:, 0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_eig_reconstruction_and_charpoly():
    rng = np.random.default_rng(7)
    for _ in range(50):
        w = random_spd(rng)
        vals, vecs = eig_sym3(w)
        np.testing.assert_allclose(
            vecs @ np.diag(vals) @ vecs.T, w, atol=1e-9 * np.abs(w).max()
        )
        # independent oracle: roots of the characteristic polynomial
        c2 = -np.trace(w)
        c1 = 0.5 * (np.trace(w) ** 2 - np.trace(w @ w))
        c0 = -np.linalg.det(w)
        roots = np.sort(np.roots([1.0, c2, c1, c0]).real)
        np.testing.assert_allclose(vals, roots, rtol=1e-8, atol=1e-10)


def test_eig_rejects_nonfinite():
    w = np.eye(3)
    w[0, 0] = np.nan
    with pytest.raises(ValueError):
        eig_sym3(w)


def test_mahalanobis_zero_vector():
    assert mahalanobis_sq(np.zeros(3), random_spd(np.random.default_rng(1))) == 0.0


def test_mahalanobis_identity():
    assert mahalanobis_sq([1.0, 0.0, 0.0], np.eye(3)) == pytest.approx(1.0)


def test_mahalanobis_diagonal():
    # oracle: explicit inverse of diag(4,1,1) gives 1/4 + 1 = 1.25
    assert mahalanobis_sq([1.0, 1.0, 0.0], np.diag([4.0, 1.0, 1.0])) == pytest.approx(1.25)


def test_mahalanobis_singular_raises():
    with pytest.raises(DegenerateCovarianceError):
        mahalanobis_sq([1.0, 0.0, 0.0], np.diag([1.0, 1.0, 0.0]))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_eigenvalues_ascending_property(seed):
    w = random_spd(np.random.default_rng(seed), scale=0.1)
    vals, _ = eig_sym3(w)
    assert vals[0] <= vals[1] <= vals[2]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_mahalanobis_spectral_identity(seed):
    # e^T W^-1 e equals the sum of inverse-eigenvalue-weighted projections
    rng = np.random.default_rng(seed)
    w = random_spd(rng, scale=0.1)
    e = rng.normal(size=3)
    vals, vecs = eig_sym3(w)
    spectral = sum((e @ vecs[:, i]) ** 2 / vals[i] for i in range(3))
    assert mahalanobis_sq(e, w) == pytest.approx(spectral, rel=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_compose_apply_associativity(seed):
    rng = np.random.default_rng(seed)
    a = RigidTransform(rotation_from_axis_angle(rng.normal(size=3)), rng.normal(size=3))
    b = RigidTransform(rotation_from_axis_angle(rng.normal(size=3)), rng.normal(size=3))
    p = rng.normal(size=3)
    np.testing.assert_allclose(a.compose(b).apply(p), a.apply(b.apply(p)), atol=1e-12)


def test_axis_angle_round_trip():
    for vec in ([0.3, -0.2, 0.9], [1e-10, 0, 0], [0, 0, 0]):
        r = rotation_from_axis_angle(np.array(vec))
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert rotation_angle(r) == pytest.approx(np.linalg.norm(vec), abs=1e-9)


def test_euler_round_trip():
    angles = (0.5, -0.3, 1.1)
    r = euler_zyx_to_matrix(*angles)
    assert matrix_to_euler_zyx(r) == pytest.approx(angles)
    assert heading_of_rotation(r) == pytest.approx(0.5)


def test_wrap_angle_half_open():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.1 - 4 * math.pi) == pytest.approx(0.1)


def test_orthonormalize_projects():
    r = rot_x(0.4) + 1e-3 * np.ones((3, 3))
    q = orthonormalize(r)
    np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-12)
    assert np.linalg.det(q) == pytest.approx(1.0)


def test_transform_validate():
    RigidTransform(rot_z(0.2), [0, 0, 1]).validate()
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 2.0, np.zeros(3)).validate()
