"""End-to-end run orchestration: inputs, heading calibration, mapping loop,
output artifacts (map PLY, trajectory CSV, metrics CSV, run summary)."""

from __future__ import annotations

import dataclasses
import logging
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InsufficientMotionError
from .io import (
    atomic_write,
    fmt,
    format_keyvalues,
    read_keyvalues,
    read_sensor_csv,
    read_trajectory_csv,
    write_trajectory_csv,
)
from .mapper import MapperConfig, MapperState, process_scan
from .metrics import crispness, crispness_proxy, emit_metrics, loop_closure_error
from .penalties import estimate_heading_offset, interpolate_attitude
from .ply import read_ply, write_ply
from .registration import IcpConfig
from .scenario import Scenario, generate_inputs, load_scenario, load_world, scenario_from_dict

log = logging.getLogger(__name__)

RUN_MODES = ("prior", "baseline", "penalty")


@dataclass
class RunConfig:
    """One mapping run: input source, mode, mapper settings, output directory."""

    out_dir: Path
    mode: str = "baseline"
    seed: int | None = None
    scenario: Scenario | None = None
    scans_dir: Path | None = None
    gnss_csv: Path | None = None
    imu_csv: Path | None = None
    groundtruth_csv: Path | None = None
    world_file: Path | None = None
    # mapper
    epsilon: float = 0.05
    r_max: float | None = 100.0
    normal_k: int = 15
    penalty_mode: str | None = None  # derived from mode unless set
    arm_length: float = 1.0
    aux_cov_scale: float = 1.0
    speed_threshold: float = 0.3
    # icp
    max_iterations: int = 40
    translation_epsilon: float = 1e-4
    rotation_epsilon: float = 1e-5
    outlier: str = "trimmed"
    trim_ratio: float = 0.85
    cauchy_scale: float = 1.0
    scale_s: float = 1.0 / 0.03**2
    # calibration and bookkeeping
    calibrate_heading: bool = True
    calib_min_distance: float = 10.0
    measure_time: bool = True

    def __post_init__(self):
        if self.mode not in RUN_MODES:
            raise ConfigError(f"mode must be one of {RUN_MODES}, got {self.mode!r}")
        self.out_dir = Path(self.out_dir)

    def mapper_config(self) -> MapperConfig:
        if self.penalty_mode is not None:
            mode = self.penalty_mode
        else:
            mode = "three_point" if self.mode == "penalty" else "none"
        return MapperConfig(
            epsilon=self.epsilon,
            r_max=self.r_max,
            icp=IcpConfig(
                max_iterations=self.max_iterations,
                translation_epsilon=self.translation_epsilon,
                rotation_epsilon=self.rotation_epsilon,
                outlier=self.outlier,
                trim_ratio=self.trim_ratio,
                cauchy_scale=self.cauchy_scale,
                scale_s=self.scale_s,
            ),
            penalty_mode=mode,
            normal_k=self.normal_k,
            arm_length=self.arm_length,
            aux_cov_scale=self.aux_cov_scale,
            speed_threshold=self.speed_threshold,
            measure_time=self.measure_time,
        )


_BOOL_KEYS = {"calibrate_heading", "measure_time"}
_INT_KEYS = {"seed", "normal_k", "max_iterations"}
_STR_KEYS = {"mode", "outlier", "penalty_mode"}
_PATH_KEYS = {"scans_dir", "gnss_csv", "imu_csv", "groundtruth_csv", "world_file"}
_FLOAT_KEYS = {
    "epsilon", "r_max", "arm_length", "aux_cov_scale", "speed_threshold",
    "max_iterations", "translation_epsilon", "rotation_epsilon", "trim_ratio",
    "cauchy_scale", "scale_s", "calib_min_distance",
}


def load_run_config(path, out_dir, **overrides) -> RunConfig:
    """Build a RunConfig from a key=value file plus CLI overrides.

    The `scenario` key names a scenario file (relative paths resolve against
    the config file); alternatively `scans_dir`, `gnss_csv` and `imu_csv`
    point at recorded inputs.
    """
    path = Path(path)
    values = read_keyvalues(path)
    base = path.parent
    kwargs: dict = {"out_dir": Path(out_dir)}
    for key, raw in values.items():
        if isinstance(raw, list):
            raise ConfigError(f"{path}: key {key!r} given more than once")
        if key == "scenario":
            kwargs["scenario"] = load_scenario(base / raw)
        elif key in _PATH_KEYS:
            kwargs[key] = base / raw
        elif key in _BOOL_KEYS:
            kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            kwargs[key] = int(raw)
        elif key in _STR_KEYS:
            kwargs[key] = raw
        elif key in _FLOAT_KEYS:
            kwargs[key] = None if raw.strip().lower() == "none" else float(raw)
        else:
            raise ConfigError(f"{path}: unknown run key {key!r}")
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}")


def _load_recorded_inputs(config: RunConfig):
    if config.scans_dir is None or config.gnss_csv is None or config.imu_csv is None:
        raise ConfigError("run config needs either a scenario or scans_dir + gnss_csv + imu_csv")
    scan_paths = sorted(Path(config.scans_dir).glob("*.ply"))
    if not scan_paths:
        raise ConfigError(f"no .ply scans found in {config.scans_dir}")
    scans = [read_ply(p) for p in scan_paths]
    fixes, _ = read_sensor_csv(config.gnss_csv)
    _, atts = read_sensor_csv(config.imu_csv)
    if len(fixes) != len(scans):
        raise ConfigError(
            f"{len(scans)} scans but {len(fixes)} GNSS fixes; one fix per scan is required"
        )
    # the IMU stream may be denser than the scan rate
    atts = [interpolate_attitude(atts, f.time) for f in fixes]
    truth = None
    if config.groundtruth_csv is not None:
        truth = read_trajectory_csv(config.groundtruth_csv)
    world = load_world(config.world_file) if config.world_file is not None else None
    return world, truth, scans, fixes, atts


def run_pipeline(config: RunConfig) -> int:
    """Execute one mapping run; returns 0 on success.

    Configuration problems raise ConfigError before any work starts. Per-scan
    ICP failures are logged and skipped inside the mapper, never fatal.
    """
    started = _time.time()
    if config.scenario is not None:
        scenario = config.scenario
        if config.seed is not None:
            scenario = dataclasses.replace(scenario, seed=config.seed)
        world, truth, scans, fixes, atts = generate_inputs(scenario)
    else:
        world, truth, scans, fixes, atts = _load_recorded_inputs(config)

    offset = 0.0
    if config.calibrate_heading:
        try:
            offset = estimate_heading_offset(
                fixes,
                [(a.time, a.raw_magnetic_heading) for a in atts],
                min_distance=config.calib_min_distance,
            )
        except InsufficientMotionError as exc:
            log.warning("heading calibration skipped: %s", exc)

    mcfg = config.mapper_config()
    mcfg.heading_offset = offset
    register = config.mode != "prior"

    state = MapperState()
    for scan, fix, att in zip(scans, fixes, atts):
        process_scan(state, scan, fix, att, mcfg, register=register)

    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_ply(state.map, out / "map.ply", ascii=False)
    write_trajectory_csv(state.trajectory, out / "trajectory.csv")

    run_metrics: dict = {}
    if world is not None and len(state.map) > 0:
        run_metrics["crispness_m"] = crispness(state.map, world)
    elif len(state.map) > 1:
        run_metrics["crispness_proxy_m"] = crispness_proxy(state.map)
    if truth is not None:
        run_metrics.update(loop_closure_error(state.trajectory, truth))
    emit_metrics(state.stats, out / "metrics.csv", run_metrics or None)

    summary = [
        ("mode", config.mode),
        ("penalty_mode", mcfg.penalty_mode),
        ("scans", len(scans)),
        ("map_points", len(state.map)),
        ("heading_offset_deg", fmt(math.degrees(offset))),
        ("icp_failures", sum(1 for s in state.stats if s.icp_failed)),
    ]
    summary += [(k, fmt(v)) for k, v in run_metrics.items()]
    if config.measure_time:
        summary.append(("wall_time_s", fmt(_time.time() - started)))
    atomic_write(out / "summary.txt", format_keyvalues(summary))
    return 0


__all__ = [
    "RunConfig",
    "RUN_MODES",
    "load_run_config",
    "run_pipeline",
    "Scenario",
    "scenario_from_dict",
]
