import numpy as np
import pytest

from icpmap.cloud import PointCloud
from icpmap.normals import estimate_normals


def test_plane_normals():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-2, 2, (200, 2)), np.zeros(200)])
    out = estimate_normals(PointCloud(pts), k=10)
    np.testing.assert_allclose(out.normals, np.tile([0.0, 0.0, 1.0], (200, 1)), atol=1e-9)


def test_cylinder_normals_radial():
    # dense sampling of a unit cylinder: normals within 0.05 rad of radial
    rng = np.random.default_rng(1)
    theta = rng.uniform(0, 2 * np.pi, 4000)
    z = rng.uniform(0, 4, 4000)
    pts = np.column_stack([np.cos(theta), np.sin(theta), z])
    cloud = estimate_normals(PointCloud(pts), k=12, view_point=[0.0, 0.0, 2.0])
    radial = np.column_stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)])
    # sign convention points toward the interior view point, i.e. -radial
    dots = np.einsum("ij,ij->i", cloud.normals, -radial)
    angles = np.arccos(np.clip(dots, -1, 1))
    assert np.quantile(angles, 0.95) < 0.05


def test_collinear_neighborhood_flagged_invalid():
    pts = np.column_stack([np.linspace(0, 1, 3), np.zeros(3), np.zeros(3)])
    out = estimate_normals(PointCloud(pts), k=3)
    assert not out.valid_normal_mask().any()


def test_sign_convention_default_up():
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(-1, 1, (100, 2)), np.zeros(100)])
    out = estimate_normals(PointCloud(pts), k=8)
    assert (out.normals[:, 2] > 0).all()


def test_view_point_flips_sign():
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.uniform(-1, 1, (100, 2)), np.zeros(100)])
    below = estimate_normals(PointCloud(pts), k=8, view_point=[0.0, 0.0, -5.0])
    assert (below.normals[:, 2] < 0).all()


def test_k_validation():
    pts = np.random.default_rng(4).normal(size=(10, 3))
    with pytest.raises(ValueError):
        estimate_normals(PointCloud(pts), k=2)
    with pytest.raises(ValueError):
        estimate_normals(PointCloud(pts), k=11)
