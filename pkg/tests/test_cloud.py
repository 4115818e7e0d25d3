import numpy as np
import pytest

from icpmap.cloud import NeighborIndex, PointCloud, build_index
from icpmap.errors import EmptyCloudError
from icpmap.geometry import RigidTransform, rot_z


def brute_force_nn(points, query, k=1):
    d2 = ((points[None, :, :] - query[:, None, :]) ** 2).sum(axis=2)
    idx = np.argsort(d2, axis=1)[:, :k]
    return np.sqrt(np.take_along_axis(d2, idx, axis=1)), idx


def test_cloud_shapes():
    c = PointCloud(np.zeros((4, 3)))
    assert len(c) == 4
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 2)))


def test_cloud_valid_normal_mask():
    normals = np.array([[0, 0, 1.0], [np.nan, np.nan, np.nan], [1.0, 0, 0]])
    c = PointCloud(np.zeros((3, 3)), normals)
    np.testing.assert_array_equal(c.valid_normal_mask(), [True, False, True])
    assert PointCloud(np.zeros((2, 3))).valid_normal_mask().sum() == 0


def test_cloud_transformed_rotates_normals_and_covariances():
    t = RigidTransform(rot_z(np.pi / 2), [1.0, 0.0, 0.0])
    c = PointCloud(
        np.array([[1.0, 0.0, 0.0]]),
        np.array([[1.0, 0.0, 0.0]]),
        np.diag([4.0, 1.0, 1.0])[None],
    )
    out = c.transformed(t)
    np.testing.assert_allclose(out.points[0], [1.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(out.normals[0], [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(out.covariances[0], np.diag([1.0, 4.0, 1.0]), atol=1e-12)


def test_cloud_validate():
    PointCloud(np.zeros((2, 3)), np.array([[0, 0, 1.0], [0, 1.0, 0]])).validate()
    with pytest.raises(ValueError):
        PointCloud(np.zeros((1, 3)), np.array([[0, 0, 2.0]])).validate()


def test_index_single_point():
    idx = NeighborIndex(np.zeros((1, 3)))
    d, i = idx.query(np.array([[1.0, 1.0, 1.0]]))
    assert i[0] == 0
    assert d[0] ** 2 == pytest.approx(3.0)


def test_index_cube_center():
    corners = np.array(
        [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float
    )
    idx = build_index(PointCloud(corners))
    d, i = idx.query(np.array([[0.5, 0.5, 0.5]]))
    assert d[0] ** 2 == pytest.approx(0.75)
    assert 0 <= i[0] < 8


def test_index_empty_cloud_raises():
    with pytest.raises(EmptyCloudError):
        NeighborIndex(np.zeros((0, 3)))


def test_index_matches_linear_scan():
    rng = np.random.default_rng(11)
    pts = rng.uniform(-5, 5, (1000, 3))
    queries = rng.uniform(-6, 6, (100, 3))
    idx = NeighborIndex(pts)
    d, i = idx.query(queries)
    bd, bi = brute_force_nn(pts, queries, k=1)
    np.testing.assert_array_equal(i, bi[:, 0])
    np.testing.assert_allclose(d, bd[:, 0])


def test_index_knn_matches_linear_scan():
    rng = np.random.default_rng(12)
    pts = rng.uniform(-5, 5, (500, 3))
    queries = rng.uniform(-5, 5, (40, 3))
    idx = NeighborIndex(pts)
    d, i = idx.query(queries, k=5)
    bd, bi = brute_force_nn(pts, queries, k=5)
    np.testing.assert_array_equal(i, bi)
    np.testing.assert_allclose(d, bd)
