"""Scenario files: a key=value description of a synthetic world, trajectory
and sensor noise profile, plus generation of the full input stream."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import diag_cov
from .io import format_keyvalues, parse_keyvalues, read_keyvalues, atomic_write, fmt
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


@dataclass
class Scenario:
    """Everything needed to generate a deterministic synthetic run."""

    seed: int = 0
    # world
    extent: float = 160.0
    tree_density: float = 0.002
    ground: bool = True
    tree_radius_min: float = 0.12
    tree_radius_max: float = 0.35
    tree_height_min: float = 4.0
    tree_height_max: float = 10.0
    # trajectory
    trajectory: str = "straight"
    length: float = 100.0
    step: float = 2.0
    speed: float = 1.0
    height: float = 1.5
    pitch_amplitude_deg: float = 5.0
    # lidar
    beams: int = 16
    azimuth_steps: int = 360
    max_range: float = 100.0
    range_noise_sigma: float = 0.02
    tilt_deg: float = 0.0
    vertical_fov_deg: float = 15.0
    # sensor noise
    gnss_sigma_xy_open: float = 0.02
    gnss_sigma_z_open: float = 0.06
    gnss_sigma_xy_canopy: float = 0.08
    gnss_sigma_z_canopy: float = 0.24
    under_canopy: bool = True
    mag_bias_deg: float = 0.0
    attitude_noise_deg: float = 0.0

    def world(self) -> World:
        return gen_world(
            self.seed,
            self.extent,
            self.tree_density,
            ground_z=0.0 if self.ground else None,
            radius_range=(self.tree_radius_min, self.tree_radius_max),
            height_range=(self.tree_height_min, self.tree_height_max),
        )

    def lidar(self) -> LidarModel:
        return LidarModel(
            max_range=self.max_range,
            beams=self.beams,
            azimuth_steps=self.azimuth_steps,
            tilt=math.radians(self.tilt_deg),
            range_noise_sigma=self.range_noise_sigma,
            vertical_fov=math.radians(self.vertical_fov_deg),
        )

    def noise(self) -> SensorNoise:
        return SensorNoise(
            gnss_cov_open=diag_cov(
                self.gnss_sigma_xy_open, self.gnss_sigma_xy_open, self.gnss_sigma_z_open
            ),
            gnss_cov_canopy=diag_cov(
                self.gnss_sigma_xy_canopy, self.gnss_sigma_xy_canopy, self.gnss_sigma_z_canopy
            ),
            mag_heading_bias=math.radians(self.mag_bias_deg),
            attitude_noise_sigma=math.radians(self.attitude_noise_deg),
        )

    def ground_truth(self) -> list:
        return gen_trajectory(
            self.trajectory,
            self.length,
            self.step,
            height=self.height,
            speed=self.speed,
            pitch_amplitude=math.radians(self.pitch_amplitude_deg),
        )


def scenario_from_dict(values: dict, source: str = "<scenario>") -> Scenario:
    known = {f.name: f.type for f in fields(Scenario)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"{source}: unknown scenario key {key!r}")
        if isinstance(raw, list):
            raise ConfigError(f"{source}: key {key!r} given more than once")
        try:
            if known[key] == "int":
                kwargs[key] = int(raw)
            elif known[key] == "float":
                kwargs[key] = float(raw)
            elif known[key] == "bool":
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                kwargs[key] = raw
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}")
    return Scenario(**kwargs)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(read_keyvalues(path), source=str(path))


def save_scenario(scenario: Scenario, path) -> None:
    pairs = [(f.name, getattr(scenario, f.name)) for f in fields(Scenario)]
    atomic_write(path, format_keyvalues(pairs))


def generate_inputs(scenario: Scenario):
    """Produce (world, ground_truth, scans, fixes, attitudes) for a scenario.

    Scan k gets its own derived seed so streams are independent but the whole
    run is a pure function of the scenario.
    """
    world = scenario.world()
    lidar = scenario.lidar()
    noise = scenario.noise()
    truth = scenario.ground_truth()
    scans, fixes, atts = [], [], []
    for k, (t, pose) in enumerate(truth):
        sk = scenario.seed * 1_000_003 + k
        scans.append(gen_scan(world, pose, lidar, sk))
        fixes.append(gen_gnss(pose, noise, scenario.under_canopy, sk, time=t))
        atts.append(gen_imu(pose, noise, sk, time=t))
    return world, truth, scans, fixes, atts


def save_world(world: World, path) -> None:
    lines = [
        ("extent", world.extent),
        ("seed", world.seed),
        ("ground_z", "none" if world.ground_z is None else fmt(world.ground_z)),
    ]
    for i in range(world.tree_count):
        c = world.tree_centers[i]
        lines.append(
            (
                "tree",
                f"{fmt(c[0])} {fmt(c[1])} {fmt(c[2])} "
                f"{fmt(world.tree_radii[i])} {fmt(world.tree_heights[i])}",
            )
        )
    atomic_write(path, format_keyvalues(lines))


def load_world(path) -> World:
    values = read_keyvalues(path)
    source = str(path)
    try:
        extent = float(values.get("extent", 0.0))
        seed = int(values.get("seed", 0))
        gz = values.get("ground_z", "0")
        ground_z = None if str(gz).lower() == "none" else float(gz)
        trees = values.get("tree", [])
        if isinstance(trees, str):
            trees = [trees]
        rows = [list(map(float, t.split())) for t in trees]
    except (ValueError, AttributeError) as exc:
        raise ConfigError(f"{source}: bad world file ({exc})")
    if rows:
        arr = np.array(rows)
        if arr.shape[1] != 5:
            raise ConfigError(f"{source}: tree lines need 5 numbers")
        centers, radii, heights = arr[:, :3], arr[:, 3], arr[:, 4]
    else:
        centers = np.zeros((0, 3))
        radii = np.zeros(0)
        heights = np.zeros(0)
    return World(extent, seed, centers, radii, heights, ground_z)
