"""Penalty-constrained ICP registration and incremental lidar mapping.

External GNSS/IMU constraints enter the ICP minimization directly as penalty
point pairs whose Mahalanobis cost is decomposed into plane projections, so a
single point-to-plane solver fuses geometry and global positioning. A
deterministic synthetic world generator, an incremental mapper with bounded
per-scan cost, and PLY/CSV tooling round out the package.
"""

from . import errors
from .cloud import NeighborIndex, PointCloud, build_index
from .estimators import IcpRegistration, NormalEstimator
from .geometry import (
    RigidTransform,
    eig_sym3,
    euler_zyx_to_matrix,
    mahalanobis_sq,
    matrix_to_euler_zyx,
    rot_x,
    rot_y,
    rot_z,
    rotation_angle,
    rotation_from_axis_angle,
    wrap_angle,
)
from .mapper import (
    MapperConfig,
    MapperState,
    ScanStats,
    cut_map,
    insert_scan,
    prior_from_sensors,
    process_scan,
)
from .metrics import crispness, crispness_proxy, emit_metrics, loop_closure_error
from .normals import estimate_normals
from .penalties import (
    GnssFix,
    ImuAttitude,
    Penalty,
    PenaltySet,
    estimate_heading_offset,
    make_gnss_penalty,
    make_three_point_penalties,
    penalty_residual,
)
from .pipeline import RunConfig, load_run_config, run_pipeline
from .ply import read_ply, write_ply
from .registration import (
    IcpConfig,
    IcpDiagnostics,
    Matches,
    PlaneConstraint,
    decompose_gaussian,
    gaussian_to_gaussian_cov,
    icp,
    match,
    objective,
    solve_constraints,
    weight_outliers,
)
from .scenario import Scenario, generate_inputs, load_scenario, load_world, save_world
from .synth import (
    LidarModel,
    SensorNoise,
    World,
    gen_gnss,
    gen_imu,
    gen_scan,
    gen_trajectory,
    gen_world,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "PointCloud",
    "NeighborIndex",
    "build_index",
    "RigidTransform",
    "eig_sym3",
    "mahalanobis_sq",
    "rotation_from_axis_angle",
    "rotation_angle",
    "rot_x",
    "rot_y",
    "rot_z",
    "euler_zyx_to_matrix",
    "matrix_to_euler_zyx",
    "wrap_angle",
    "estimate_normals",
    "IcpConfig",
    "IcpDiagnostics",
    "Matches",
    "PlaneConstraint",
    "match",
    "weight_outliers",
    "decompose_gaussian",
    "gaussian_to_gaussian_cov",
    "solve_constraints",
    "icp",
    "objective",
    "GnssFix",
    "ImuAttitude",
    "Penalty",
    "PenaltySet",
    "penalty_residual",
    "make_gnss_penalty",
    "make_three_point_penalties",
    "estimate_heading_offset",
    "MapperConfig",
    "MapperState",
    "ScanStats",
    "prior_from_sensors",
    "cut_map",
    "insert_scan",
    "process_scan",
    "World",
    "LidarModel",
    "SensorNoise",
    "gen_world",
    "gen_scan",
    "gen_gnss",
    "gen_imu",
    "gen_trajectory",
    "Scenario",
    "generate_inputs",
    "load_scenario",
    "load_world",
    "save_world",
    "read_ply",
    "write_ply",
    "crispness",
    "crispness_proxy",
    "emit_metrics",
    "loop_closure_error",
    "RunConfig",
    "load_run_config",
    "run_pipeline",
    "IcpRegistration",
    "NormalEstimator",
    "__version__",
]
