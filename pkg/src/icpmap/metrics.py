"""Run metrics: per-scan diagnostics CSV, map crispness, loop-closure error."""

from __future__ import annotations

import csv
import io as _stdio
import math
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .geometry import RigidTransform, rotation_angle
from .io import atomic_write, fmt
from .synth import World

METRICS_COLUMNS = (
    "scan_id",
    "time_s",
    "cutmap_points",
    "map_points",
    "registration_ms",
    "insertion_ms",
    "icp_iterations",
    "residual",
)


def emit_metrics(records, path, run_metrics: dict | None = None) -> None:
    """Write the per-scan metrics CSV plus small plot-data series.

    The plot files (one x,y series each for cut-map size and registration
    time) land next to the CSV. Run-level metrics, when given, go to a
    key=value summary next to it as well.
    """
    path = Path(path)
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for r in records:
        w.writerow(
            [
                r.scan_id,
                fmt(r.time_s),
                r.cutmap_points,
                r.map_points,
                fmt(r.registration_ms),
                fmt(r.insertion_ms),
                r.icp_iterations,
                fmt(r.residual),
            ]
        )
    atomic_write(path, buf.getvalue())

    for column, stem in (("cutmap_points", "plot_cutmap_points"),
                         ("registration_ms", "plot_registration_ms")):
        series = _stdio.StringIO()
        sw = csv.writer(series, lineterminator="\n")
        sw.writerow(["scan_id", column])
        for r in records:
            value = getattr(r, column)
            sw.writerow([r.scan_id, fmt(value)])
        atomic_write(path.with_name(stem + ".csv"), series.getvalue())

    if run_metrics is not None:
        lines = "".join(f"{k} = {fmt(v)}\n" for k, v in run_metrics.items())
        atomic_write(path.with_name("run_metrics.txt"), lines)


def point_to_surface_distances(points: np.ndarray, world: World) -> np.ndarray:
    """Exact distance from each point to the nearest world surface."""
    points = np.asarray(points, dtype=float)
    d = np.full(len(points), np.inf)
    if world.ground_z is not None:
        d = np.abs(points[:, 2] - world.ground_z)
    for i in range(world.tree_count):
        c = world.tree_centers[i]
        radial = np.hypot(points[:, 0] - c[0], points[:, 1] - c[1])
        lateral = np.abs(radial - world.tree_radii[i])
        z_lo, z_hi = c[2], c[2] + world.tree_heights[i]
        dz = np.maximum(np.maximum(z_lo - points[:, 2], points[:, 2] - z_hi), 0.0)
        d = np.minimum(d, np.hypot(lateral, dz))
    return d


def crispness(cloud: PointCloud, world: World) -> float:
    """Mean distance of map points to the nearest ground-truth surface."""
    if len(cloud) == 0:
        return float("nan")
    return float(point_to_surface_distances(cloud.points, world).mean())


def crispness_proxy(cloud: PointCloud) -> float:
    """Mean 1-NN spacing within the map; stand-in when no ground truth exists."""
    if len(cloud) < 2:
        return float("nan")
    tree = cKDTree(cloud.points)
    d, _ = tree.query(cloud.points, k=2, workers=1)
    return float(d[:, 1].mean())


def relative_pose_error(a: RigidTransform, b: RigidTransform) -> tuple[float, float]:
    """(translation, rotation) magnitude of the discrepancy between two poses."""
    err = a.inverse().compose(b)
    return float(np.linalg.norm(err.translation)), rotation_angle(err.rotation)


def loop_closure_error(traj_est, traj_gt) -> dict:
    """Start-to-end drift: the estimated first-to-last relative motion compared
    against ground truth. Returns translation (m) and rotation (rad) errors."""
    if len(traj_est) < 2 or len(traj_gt) < 2:
        return {"loop_closure_error_m": float("nan"), "loop_closure_error_rad": float("nan")}
    delta_est = traj_est[0][1].inverse().compose(traj_est[-1][1])
    delta_gt = traj_gt[0][1].inverse().compose(traj_gt[-1][1])
    t_err, r_err = relative_pose_error(delta_gt, delta_est)
    return {"loop_closure_error_m": t_err, "loop_closure_error_rad": r_err}


def trajectory_position_errors(traj_est, positions) -> np.ndarray:
    """Horizontal distances between estimated poses and reference positions."""
    est = np.array([pose.translation[:2] for _, pose in traj_est])
    ref = np.asarray(positions, dtype=float)[: len(est), :2]
    return np.linalg.norm(est - ref, axis=1)


def pitch_of(rotation: np.ndarray) -> float:
    from .geometry import matrix_to_euler_zyx

    return matrix_to_euler_zyx(rotation)[1]


def terminal_pitch_error(traj_est, traj_gt) -> float:
    """Absolute pitch difference between the final estimated and true poses."""
    est = pitch_of(traj_est[-1][1].rotation)
    gt = pitch_of(traj_gt[-1][1].rotation)
    return abs(math.remainder(est - gt, math.tau))
