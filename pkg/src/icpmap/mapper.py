"""Incremental mapping loop: sensor prior, cut map, registration, insertion."""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import IcpMapError
from .geometry import RigidTransform, heading_of_rotation, rot_z
from .normals import scatter_normals
from .penalties import (
    GnssFix,
    ImuAttitude,
    make_gnss_penalty,
    make_three_point_penalties,
    select_heading,
)
from .registration import IcpConfig, icp

log = logging.getLogger(__name__)

PENALTY_MODES = ("none", "gnss_only", "three_point")

# padding around the scan footprint when restricting insertion checks and
# normal neighborhoods to the local part of the map; must exceed any
# plausible k-NN radius of an inserted point
_LOCAL_MARGIN = 2.0


@dataclass
class MapperConfig:
    """Mapping parameters: insertion spacing, cut-map radius, ICP settings."""

    epsilon: float = 0.05
    r_max: float | None = 100.0
    icp: IcpConfig = field(default_factory=IcpConfig)
    penalty_mode: str = "none"
    normal_k: int = 15
    arm_length: float = 1.0
    aux_cov_scale: float = 1.0
    heading_offset: float = 0.0
    speed_threshold: float = 0.3
    measure_time: bool = True

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.r_max is not None and self.r_max <= 0.0:
            raise ValueError("r_max must be positive or None")
        if self.penalty_mode not in PENALTY_MODES:
            raise ValueError(f"penalty_mode must be one of {PENALTY_MODES}")

    @classmethod
    def large_map(cls, **kwargs) -> "MapperConfig":
        """Preset for long runs: coarser insertion spacing to bound memory."""
        kwargs.setdefault("epsilon", 0.10)
        return cls(**kwargs)


@dataclass
class ScanStats:
    """Per-scan diagnostics emitted to the metrics CSV."""

    scan_id: int
    time_s: float
    cutmap_points: int
    map_points: int
    registration_ms: float
    insertion_ms: float
    icp_iterations: int
    residual: float
    inserted_points: int = 0
    icp_failed: bool = False


@dataclass
class MapperState:
    """Everything the mapping loop carries between scans."""

    map: PointCloud | None = None
    pose: RigidTransform = field(default_factory=RigidTransform.identity)
    last_fix: GnssFix | None = None
    last_attitude: ImuAttitude | None = None
    trajectory: list = field(default_factory=list)
    stats: list = field(default_factory=list)
    scan_count: int = 0


def prior_from_sensors(
    prev: MapperState, fix: GnssFix | None, att: ImuAttitude | None
) -> RigidTransform:
    """Previous pose advanced by the GNSS position increment and IMU rotation
    increment; falls back to the previous pose when sensor data is missing."""
    rotation = prev.pose.rotation
    translation = prev.pose.translation
    if att is not None and prev.last_attitude is not None:
        delta_r = att.attitude @ prev.last_attitude.attitude.T
        rotation = delta_r @ rotation
    if fix is not None and prev.last_fix is not None:
        translation = translation + (fix.position - prev.last_fix.position)
    return RigidTransform(rotation, translation)


def cut_map(map_cloud: PointCloud, center, r_max: float | None) -> PointCloud:
    """Points within r_max of center (normals preserved); everything if r_max is None."""
    if r_max is None:
        return map_cloud
    center = np.asarray(center, dtype=float)
    d2 = ((map_cloud.points - center) ** 2).sum(axis=1)
    return map_cloud.subset(d2 <= r_max * r_max)


def insert_scan(
    map_cloud: PointCloud | None,
    scan: PointCloud,
    t: RigidTransform,
    epsilon: float,
    normal_k: int = 15,
) -> PointCloud:
    """Insert transformed scan points farther than epsilon from the map.

    Candidates are processed in scan order, so an accepted point also excludes
    later candidates within epsilon. Normals for the accepted points are
    estimated from their neighborhoods in the updated map, oriented toward the
    sensor position; existing map normals are untouched.
    """
    candidates = t.apply(scan.points)
    local_idx = None
    if map_cloud is not None and len(map_cloud) > 0:
        # the candidates and their neighborhoods are local: restrict the
        # distance checks to map points near the scan footprint
        center = candidates.mean(axis=0)
        reach = float(np.linalg.norm(candidates - center, axis=1).max())
        d2_map = ((map_cloud.points - center) ** 2).sum(axis=1)
        local_idx = np.nonzero(d2_map <= (reach + _LOCAL_MARGIN) ** 2)[0]
        if len(local_idx):
            map_tree = cKDTree(map_cloud.points[local_idx])
            d, _ = map_tree.query(candidates, k=1, workers=1)
            mask = d > epsilon
        else:
            mask = np.ones(len(candidates), dtype=bool)
    else:
        map_cloud = None
        mask = np.ones(len(candidates), dtype=bool)

    # greedy in-order thinning among the surviving candidates
    cand_tree = cKDTree(candidates)
    order = np.nonzero(mask)[0]
    keep = mask.copy()
    for i in order:
        if not keep[i]:
            continue
        for j in cand_tree.query_ball_point(candidates[i], epsilon):
            if j > i:
                keep[j] = False
    accepted = candidates[keep]
    if len(accepted) == 0:
        return map_cloud if map_cloud is not None else PointCloud.empty()

    if map_cloud is None:
        new_points = accepted
        old_normals = np.zeros((0, 3))
        neighborhood = accepted
    else:
        new_points = np.vstack([map_cloud.points, accepted])
        old_normals = map_cloud.normals if map_cloud.normals is not None else np.full(
            (len(map_cloud), 3), np.nan
        )
        neighborhood = np.vstack([map_cloud.points[local_idx], accepted])
    k = min(normal_k, len(neighborhood))
    if k >= 3:
        tree = cKDTree(neighborhood)
        new_normals = scatter_normals(accepted, neighborhood, tree, k, view_point=t.translation)
    else:
        new_normals = np.full((len(accepted), 3), np.nan)
    return PointCloud(new_points, np.vstack([old_normals, new_normals]))


def _bootstrap_pose(fix, att, heading_offset):
    """Map frame anchored to ENU: first pose at the fix, yaw from the
    offset-corrected magnetometer heading."""
    if fix is None or att is None:
        return RigidTransform.identity()
    heading = att.raw_magnetic_heading - heading_offset
    yaw = heading_of_rotation(att.attitude)
    rotation = rot_z(heading - yaw) @ att.attitude
    return RigidTransform(rotation, fix.position.copy())


def _build_penalties(state, fix, att, config):
    if config.penalty_mode == "none" or fix is None:
        return []
    if config.penalty_mode == "gnss_only":
        return make_gnss_penalty(fix).penalties
    if att is None:
        return make_gnss_penalty(fix).penalties
    heading = select_heading(
        state.last_fix, fix, att, config.heading_offset, config.speed_threshold
    )
    return make_three_point_penalties(
        fix, att, heading, config.arm_length, config.aux_cov_scale
    ).penalties


def process_scan(
    state: MapperState,
    scan: PointCloud,
    fix: GnssFix | None,
    att: ImuAttitude | None,
    config: MapperConfig,
    register: bool = True,
) -> MapperState:
    """Run one mapping step: prior, cut map, registration, insertion.

    The first scan bootstraps the map at the heading-calibrated sensor pose.
    A registration failure skips the scan (nothing inserted) and records the
    prior pose so one bad scan cannot abort a run. Set register=False to
    insert at the sensor prior without running ICP.
    """
    if len(scan) == 0:
        raise ValueError("scan is empty")
    clock = _time.perf_counter if config.measure_time else (lambda: 0.0)
    scan_time = fix.time if fix is not None else float(state.scan_count)

    first = state.map is None or len(state.map) == 0
    if first:
        prior = _bootstrap_pose(fix, att, config.heading_offset)
    else:
        prior = prior_from_sensors(state, fix, att)

    cut = None
    pose = prior
    iterations = 0
    residual = float("nan")
    failed = False
    t0 = clock()
    if not first and register:
        cut = cut_map(state.map, prior.translation, config.r_max)
        if len(cut) == 0:
            log.warning("scan %d: empty cut map, inserting at prior", state.scan_count)
        else:
            penalties = _build_penalties(state, fix, att, config)
            try:
                pose, diag = icp(scan, cut, prior, penalties, config.icp)
                iterations = diag.iterations
                residual = diag.objective
            except IcpMapError as exc:
                log.warning("scan %d: registration failed (%s), skipping scan",
                            state.scan_count, exc)
                pose = prior
                failed = True
    registration_ms = (clock() - t0) * 1e3

    t1 = clock()
    before = 0 if state.map is None else len(state.map)
    if not failed:
        state.map = insert_scan(state.map, scan, pose, config.epsilon, config.normal_k)
    insertion_ms = (clock() - t1) * 1e3

    state.pose = pose
    state.last_fix = fix
    state.last_attitude = att
    state.trajectory.append((scan_time, pose))
    state.stats.append(
        ScanStats(
            scan_id=state.scan_count,
            time_s=scan_time,
            cutmap_points=len(cut) if cut is not None else 0,
            map_points=len(state.map),
            registration_ms=registration_ms,
            insertion_ms=insertion_ms,
            icp_iterations=iterations,
            residual=residual,
            inserted_points=len(state.map) - before,
            icp_failed=failed,
        )
    )
    state.scan_count += 1
    return state
