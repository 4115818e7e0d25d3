import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import icpmap
from icpmap.cloud import PointCloud, build_index
from icpmap.errors import (
    DegenerateConstraintsError,
    DegenerateCovarianceError,
    EmptyOverlapError,
)
from icpmap.geometry import RigidTransform, rot_z, rotation_angle, rotation_from_axis_angle
from icpmap.normals import estimate_normals
from icpmap.registration import (
    IcpConfig,
    Matches,
    PlaneConstraint,
    build_point_constraints,
    decompose_gaussian,
    gaussian_to_gaussian_cov,
    icp,
    match,
    objective,
    solve_arrays,
    solve_constraints,
    weight_outliers,
)


def random_spd(rng, scale=0.05):
    a = rng.normal(size=(3, 3))
    return a @ a.T + scale * np.eye(3)


def structured_scene(seed=0, n=400):
    """Points on two tilted planes and a cylinder patch: constrains all 6 DoF."""
    rng = np.random.default_rng(seed)
    ground = np.column_stack([rng.uniform(-5, 5, (n, 2)), np.zeros(n)])
    wall = np.column_stack(
        [rng.uniform(-5, 5, n), np.full(n, 4.0) + 0.2 * rng.uniform(-1, 1, n), rng.uniform(0, 3, n)]
    )
    theta = rng.uniform(0, 2 * np.pi, n)
    cyl = np.column_stack([2 + 0.5 * np.cos(theta), -2 + 0.5 * np.sin(theta), rng.uniform(0, 2, n)])
    return np.vstack([ground, wall, cyl])


@pytest.fixture(scope="module")
def scene_map():
    pts = structured_scene()
    return estimate_normals(PointCloud(pts), k=10, view_point=[0.0, 0.0, 2.0])


# ---------------------------------------------------------------- matching


def test_match_self_identity(scene_map):
    index = build_index(scene_map)
    m = match(scene_map, index, RigidTransform.identity())
    np.testing.assert_array_equal(m.map_indices, np.arange(len(scene_map)))
    np.testing.assert_allclose(m.squared_distances, 0.0)


def test_match_shifted_line():
    # map: line of pitch 1 m; scan: shifted +0.1 in x -> nearest original point
    line = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
    index = build_index(PointCloud(line))
    scan = PointCloud(line + [0.1, 0.0, 0.0])
    m = match(scan, index, RigidTransform.identity())
    np.testing.assert_array_equal(m.map_indices, np.arange(10))
    np.testing.assert_allclose(m.squared_distances, 0.01)


def test_match_equals_linear_scan():
    rng = np.random.default_rng(5)
    map_pts = rng.uniform(-5, 5, (300, 3))
    scan_pts = rng.uniform(-5, 5, (80, 3))
    t = RigidTransform(rot_z(0.3), [0.5, -0.2, 0.1])
    m = match(PointCloud(scan_pts), build_index(PointCloud(map_pts)), t)
    moved = t.apply(scan_pts)
    d2 = ((map_pts[None] - moved[:, None]) ** 2).sum(axis=2)
    np.testing.assert_array_equal(m.map_indices, d2.argmin(axis=1))
    np.testing.assert_allclose(m.squared_distances, d2.min(axis=1), rtol=1e-12)


# ---------------------------------------------------------------- weighting


def _matches_with_d2(d2):
    n = len(d2)
    return Matches(np.arange(n), np.arange(n), np.asarray(d2, dtype=float))


def test_trimmed_weights():
    w = weight_outliers(_matches_with_d2([1.0, 2.0, 3.0, 4.0]), IcpConfig(outlier="trimmed", trim_ratio=0.5))
    np.testing.assert_array_equal(w, [1.0, 1.0, 0.0, 0.0])


def test_trimmed_weights_unordered_input():
    w = weight_outliers(_matches_with_d2([4.0, 1.0, 3.0, 2.0]), IcpConfig(outlier="trimmed", trim_ratio=0.5))
    np.testing.assert_array_equal(w, [0.0, 1.0, 0.0, 1.0])


def test_none_weights():
    w = weight_outliers(_matches_with_d2([5.0, 0.1, 2.0]), IcpConfig(outlier="none"))
    np.testing.assert_array_equal(w, 1.0)


def test_cauchy_weight_formula():
    w = weight_outliers(_matches_with_d2([1.0]), IcpConfig(outlier="cauchy", cauchy_scale=1.0))
    assert w[0] == pytest.approx(0.5)


def test_config_validation():
    with pytest.raises(ValueError):
        IcpConfig(outlier="huber")
    with pytest.raises(ValueError):
        IcpConfig(trim_ratio=0.0)
    with pytest.raises(ValueError):
        IcpConfig(scale_s=-1.0)


# ---------------------------------------------------- gaussian decomposition


def test_decompose_identity_covariance():
    cons = decompose_gaussian(np.zeros(3), np.zeros(3), np.eye(3))
    assert len(cons) == 3
    normals = np.array([c.normal for c in cons])
    np.testing.assert_allclose(normals @ normals.T, np.eye(3), atol=1e-12)
    assert [c.weight for c in cons] == pytest.approx([1.0, 1.0, 1.0])


def test_decompose_point_to_plane_limit():
    # a tiny first eigenvalue turns the dominant term into a plane projection
    cons = decompose_gaussian(np.zeros(3), np.zeros(3), np.diag([1e-4, 1.0, 1.0]))
    np.testing.assert_allclose(np.abs(cons[0].normal), [1.0, 0.0, 0.0], atol=1e-12)
    assert cons[0].weight == pytest.approx(1e4)
    e = np.array([0.3, -0.8, 0.5])
    ratios = []
    for lam1 in (1e-2, 1e-4, 1e-6):
        cons = decompose_gaussian(np.zeros(3), np.zeros(3), np.diag([lam1, 1.0, 1.0]))
        total = sum(c.weight * float(e @ c.normal) ** 2 for c in cons)
        plane = (1.0 / lam1) * float(e @ cons[0].normal) ** 2
        ratios.append(abs(total - plane) / total)
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 1e-4


def test_decompose_singular_raises():
    with pytest.raises(DegenerateCovarianceError):
        decompose_gaussian(np.zeros(3), np.zeros(3), np.diag([0.0, 1.0, 1.0]))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_decomposition_identity_property(seed):
    rng = np.random.default_rng(seed)
    w = random_spd(rng)
    e = rng.normal(size=3)
    cons = decompose_gaussian(np.zeros(3), np.zeros(3), w)
    total = sum(c.weight * float(e @ c.normal) ** 2 for c in cons)
    assert total == pytest.approx(icpmap.mahalanobis_sq(e, w), rel=1e-9)


def test_gaussian_to_gaussian_identity():
    out = gaussian_to_gaussian_cov(np.eye(3), np.eye(3), RigidTransform(rot_z(1.0), np.zeros(3)))
    np.testing.assert_allclose(out, 2.0 * np.eye(3), atol=1e-12)


def test_gaussian_to_gaussian_rotates_principal_axis():
    t = RigidTransform(rot_z(np.pi / 2), np.zeros(3))
    out = gaussian_to_gaussian_cov(1e-9 * np.eye(3), np.diag([1.0, 0.1, 0.1]), t)
    np.testing.assert_allclose(out, np.diag([0.1, 1.0, 0.1]), atol=1e-6)


def test_gaussian_to_gaussian_spd():
    rng = np.random.default_rng(9)
    for _ in range(20):
        t = RigidTransform(rotation_from_axis_angle(rng.normal(size=3)), np.zeros(3))
        out = gaussian_to_gaussian_cov(random_spd(rng), random_spd(rng), t)
        np.testing.assert_allclose(out, out.T)
        assert np.linalg.eigvalsh(out).min() > 0


# ----------------------------------------------------------------- solver


def test_solver_prealigned_identity(scene_map):
    m = match(scene_map, build_index(scene_map), RigidTransform.identity())
    w = np.ones(len(m))
    q, p, n, wk = build_point_constraints(scene_map, scene_map, m, w, RigidTransform.identity())
    delta, _, _ = solve_arrays(q, p, n, wk)
    assert np.linalg.norm(delta.translation) < 1e-10
    assert rotation_angle(delta.rotation) < 1e-10


def test_solver_pure_translation_min_norm():
    # all normals along x: solvable along x only; min-norm step recovers -0.1
    rng = np.random.default_rng(1)
    pts = rng.uniform(-5, 5, (30, 3))
    cons = [
        PlaneConstraint(np.array([1.0, 0.0, 0.0]), 1.0, p, p + [0.1, 0.0, 0.0]) for p in pts
    ]
    delta = solve_constraints(cons, allow_deficient=True)
    np.testing.assert_allclose(delta.translation, [-0.1, 0.0, 0.0], atol=1e-6)
    assert rotation_angle(delta.rotation) < 1e-8


def test_solver_rank_deficiency_names_directions():
    cons = [
        PlaneConstraint(np.array([0.0, 0.0, 1.0]), 1.0, np.array([x, y, 0.0]), np.array([x, y, 0.1]))
        for x in range(3)
        for y in range(3)
    ]
    with pytest.raises(DegenerateConstraintsError) as exc:
        solve_constraints(cons)
    msg = str(exc.value)
    assert "x (translation)" in msg and "y (translation)" in msg and "yaw" in msg


def test_solver_needs_six_constraints():
    c = PlaneConstraint(np.array([0.0, 0.0, 1.0]), 1.0, np.zeros(3), np.zeros(3))
    with pytest.raises(DegenerateConstraintsError):
        solve_constraints([c] * 5)


def test_solver_small_twist_recovery():
    # ground-truth twists up to 0.01 rad recovered in one step within 1e-4
    pts = structured_scene(seed=3)
    cloud = estimate_normals(PointCloud(pts), k=10, view_point=[0.0, 0.0, 2.0])
    valid = cloud.valid_normal_mask()
    rng = np.random.default_rng(4)
    for _ in range(10):
        omega = rng.normal(size=3)
        omega *= rng.uniform(0, 0.01) / np.linalg.norm(omega)
        v = rng.normal(size=3)
        v *= rng.uniform(0, 0.01) / np.linalg.norm(v)
        true = RigidTransform(rotation_from_axis_angle(omega), v)
        moved = true.apply(cloud.points[valid])
        cons_q = cloud.points[valid]
        cons_n = cloud.normals[valid]
        delta, _, _ = solve_arrays(cons_q, moved, cons_n, np.ones(len(moved)))
        err = delta.compose(true)
        assert np.linalg.norm(err.translation) < 1e-4
        assert rotation_angle(err.rotation) < 1e-4


# -------------------------------------------------------------------- icp


def test_icp_self_registration_identity(scene_map):
    est, diag = icp(scene_map, scene_map, RigidTransform.identity())
    assert np.linalg.norm(est.translation) < 1e-9
    assert rotation_angle(est.rotation) < 1e-9
    assert diag.iterations <= 2
    assert diag.converged


def test_icp_recovers_known_transform(scene_map):
    true = RigidTransform(rot_z(0.03), [0.15, -0.12, 0.05])
    scan = PointCloud(true.inverse().apply(scene_map.points))
    prior = RigidTransform(rot_z(0.03 + 0.04), [0.3, 0.0, 0.0])
    est, diag = icp(scan, scene_map, prior, config=IcpConfig(outlier="none"))
    err_t = np.linalg.norm(est.translation - true.translation)
    err_r = rotation_angle(est.rotation @ true.rotation.T)
    assert err_t < 1e-3 and err_r < 1e-3
    assert diag.converged


def test_icp_penalty_dominates_as_point_scale_vanishes(scene_map):
    # analytic limit: with the point term scaled away the minimizer is the
    # penalty's least-squares solution (origin pulled to the target)
    target = np.array([1.0, 0.0, 0.0])
    pen = icpmap.Penalty(target, np.zeros(3), 1e-4 * np.eye(3))
    errs = []
    for s in (100.0, 1.0, 0.01):
        cfg = IcpConfig(outlier="none", scale_s=s, max_iterations=60, max_translation_step=2.0)
        est, _ = icp(scene_map, scene_map, RigidTransform.identity(), [pen], cfg)
        errs.append(np.linalg.norm(est.translation - target))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_icp_empty_scan_raises(scene_map):
    with pytest.raises(EmptyOverlapError):
        icp(PointCloud.empty(), scene_map, RigidTransform.identity())


def test_icp_map_without_normals_raises(scene_map):
    with pytest.raises(ValueError):
        icp(scene_map, PointCloud(scene_map.points), RigidTransform.identity())


def test_icp_reduces_to_point_to_plane_without_penalties(scene_map):
    # identical constraint arrays: the penalty-aware assembly with no
    # penalties is bitwise the plain weighted point-to-plane constraint set
    t = RigidTransform(rot_z(0.01), [0.05, 0.0, 0.0])
    cfg = IcpConfig()
    index = build_index(scene_map)
    m = match(scene_map, index, t)
    w = weight_outliers(m, cfg)
    q, p, n, wk = build_point_constraints(scene_map, scene_map, m, w, t)
    scaled = wk * (cfg.scale_s / len(m))

    est_plain, diag_plain = icp(scene_map, scene_map, t, (), cfg)
    est_pen, diag_pen = icp(scene_map, scene_map, t, [], cfg)
    assert est_plain.rotation.tobytes() == est_pen.rotation.tobytes()
    assert est_plain.translation.tobytes() == est_pen.translation.tobytes()
    assert diag_pen.constraint_count == len(q)
    assert scaled.shape == wk.shape


def test_icp_permutation_invariance(scene_map):
    rng = np.random.default_rng(8)
    pts = structured_scene(seed=6, n=150)
    scan = PointCloud(pts)
    prior = RigidTransform(rot_z(0.02), [0.1, -0.05, 0.02])
    est_a, _ = icp(scan, scene_map, prior)
    perm = rng.permutation(len(pts))
    est_b, _ = icp(PointCloud(pts[perm]), scene_map, prior)
    np.testing.assert_allclose(est_a.translation, est_b.translation, atol=1e-9)
    np.testing.assert_allclose(est_a.rotation, est_b.rotation, atol=1e-9)


# -------------------------------------------------------------- objective


def test_objective_zero_when_aligned(scene_map):
    assert objective(scene_map, scene_map, RigidTransform.identity()) == pytest.approx(0.0, abs=1e-20)


def test_objective_single_pair_unit_error():
    # one match with error equal to the normal, s = M = 1 -> J = 1
    map_cloud = PointCloud(np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]))
    scan = PointCloud(np.array([[0.0, 0.0, -1.0]]))
    cfg = IcpConfig(outlier="none", scale_s=1.0)
    assert objective(scan, map_cloud, RigidTransform.identity(), (), cfg) == pytest.approx(1.0)


def test_objective_monotone_on_plane_world(scene_map):
    prior = RigidTransform(rot_z(0.02), [0.1, 0.05, -0.05])
    _, diag = icp(scene_map, scene_map, prior, config=IcpConfig(outlier="none"))
    hist = np.array(diag.objective_history)
    assert (np.diff(hist) <= 1e-12 * max(1.0, hist[0])).all()
