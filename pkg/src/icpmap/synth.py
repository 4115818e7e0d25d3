"""Deterministic synthetic world, lidar, GNSS and IMU generators.

The world is a flat ground plane plus vertical cylinders ("trees"), chosen so
every ray intersection and point-to-surface distance has a closed form. All
generators are pure functions of their inputs and a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .geometry import (
    RigidTransform,
    diag_cov,
    euler_zyx_to_matrix,
    matrix_to_euler_zyx,
    rot_y,
    wrap_angle,
)
from .penalties import GnssFix, ImuAttitude

# per-generator RNG stream tags so one scenario seed cannot alias streams
_TAG_WORLD, _TAG_SCAN, _TAG_GNSS, _TAG_IMU = 11, 13, 17, 19


def _rng(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0x7FFFFFFF, tag, index])


@dataclass
class World:
    """Ground plane (optional) and vertical cylinder trees."""

    extent: float
    seed: int
    tree_centers: np.ndarray  # (n, 3) base centers
    tree_radii: np.ndarray
    tree_heights: np.ndarray
    ground_z: float | None = 0.0

    def __post_init__(self):
        self.tree_centers = np.asarray(self.tree_centers, dtype=float).reshape(-1, 3)
        self.tree_radii = np.asarray(self.tree_radii, dtype=float).reshape(-1)
        self.tree_heights = np.asarray(self.tree_heights, dtype=float).reshape(-1)
        if (self.tree_radii <= 0).any() or (self.tree_heights <= 0).any():
            raise ValueError("tree radii and heights must be positive")

    @property
    def tree_count(self) -> int:
        return len(self.tree_radii)


@dataclass
class LidarModel:
    """Spinning multi-beam lidar: beams spread over +/- vertical_fov.

    azimuth_dither shifts each scan's azimuth grid by a random fraction of a
    step (drawn from the scan seed), mimicking the unsynchronized spin phase
    of a real sensor; without it, flat-ground rings repeat exactly under
    azimuth-step rotations.
    """

    max_range: float = 100.0
    beams: int = 16
    azimuth_steps: int = 900
    tilt: float = 0.0  # head tilt from vertical spin axis, radians
    range_noise_sigma: float = 0.0
    vertical_fov: float = math.radians(15.0)
    azimuth_dither: bool = True

    def __post_init__(self):
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")
        if self.range_noise_sigma < 0.0:
            raise ValueError("range noise must be >= 0")

    def ray_directions(self, phase: float = 0.0) -> np.ndarray:
        """Unit ray directions in the sensor frame, (beams * azimuth_steps, 3)."""
        elev = np.linspace(-self.vertical_fov, self.vertical_fov, self.beams)
        azim = phase + np.linspace(0.0, 2.0 * math.pi, self.azimuth_steps, endpoint=False)
        ce, se = np.cos(elev), np.sin(elev)
        ca, sa = np.cos(azim), np.sin(azim)
        d = np.empty((self.beams, self.azimuth_steps, 3))
        d[:, :, 0] = ce[:, None] * ca[None, :]
        d[:, :, 1] = ce[:, None] * sa[None, :]
        d[:, :, 2] = se[:, None] * np.ones_like(ca)[None, :]
        d = d.reshape(-1, 3)
        if self.tilt != 0.0:
            d = d @ rot_y(self.tilt).T
        return d


@dataclass
class SensorNoise:
    """GNSS covariances for open sky and under canopy, plus IMU error model.

    The canopy default reflects degraded RTK: decimeter-level horizontal
    scatter with altitude three times worse.
    """

    gnss_cov_open: np.ndarray = field(default_factory=lambda: diag_cov(0.02, 0.02, 0.06))
    gnss_cov_canopy: np.ndarray = field(default_factory=lambda: diag_cov(0.08, 0.08, 0.24))
    mag_heading_bias: float = 0.0
    attitude_noise_sigma: float = 0.0

    def __post_init__(self):
        self.gnss_cov_open = np.asarray(self.gnss_cov_open, dtype=float).reshape(3, 3)
        self.gnss_cov_canopy = np.asarray(self.gnss_cov_canopy, dtype=float).reshape(3, 3)


def gen_world(
    seed: int,
    extent: float,
    tree_density: float,
    ground_z: float | None = 0.0,
    radius_range=(0.12, 0.35),
    height_range=(4.0, 10.0),
) -> World:
    """Poisson-sampled cylinder forest over a square of side `extent`."""
    if tree_density < 0.0:
        raise ValueError("tree_density must be >= 0")
    rng = _rng(seed, _TAG_WORLD)
    n = int(rng.poisson(tree_density * extent * extent))
    half = extent / 2.0
    centers = np.zeros((n, 3))
    centers[:, 0] = rng.uniform(-half, half, n)
    centers[:, 1] = rng.uniform(-half, half, n)
    centers[:, 2] = ground_z if ground_z is not None else 0.0
    radii = rng.uniform(radius_range[0], radius_range[1], n)
    heights = rng.uniform(height_range[0], height_range[1], n)
    return World(extent, seed, centers, radii, heights, ground_z)


def _intersect_ground(origin, dirs, ground_z):
    t = np.full(len(dirs), np.inf)
    dz = dirs[:, 2]
    nonpar = np.abs(dz) > 1e-12
    tt = (ground_z - origin[2]) / np.where(nonpar, dz, 1.0)
    valid = nonpar & (tt > 1e-9)
    t[valid] = tt[valid]
    return t


def _intersect_cylinder(origin, dirs, center, radius, z_lo, z_hi):
    """Smallest positive ray parameter hitting the lateral surface, else inf."""
    oc = origin[:2] - center[:2]
    dxy = dirs[:, :2]
    a = np.einsum("ij,ij->i", dxy, dxy)
    b = 2.0 * (dxy @ oc)
    c = float(oc @ oc) - radius * radius
    disc = b * b - 4.0 * a * c
    t_best = np.full(len(dirs), np.inf)
    ok = (disc >= 0.0) & (a > 1e-12)
    if not ok.any():
        return t_best
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        t = (-b + sign * sq) / (2.0 * np.where(ok, a, 1.0))
        z = origin[2] + t * dirs[:, 2]
        hit = ok & (t > 1e-9) & (z >= z_lo) & (z <= z_hi)
        t_best = np.where(hit & (t < t_best), t, t_best)
    return t_best


def gen_scan(world: World, pose: RigidTransform, lidar: LidarModel, seed: int) -> PointCloud:
    """Ray-cast one scan from `pose`; returns points in the sensor frame.

    One return per ray that hits geometry within max_range, with Gaussian
    range noise applied along the ray.
    """
    rng = _rng(seed, _TAG_SCAN)
    phase = 0.0
    if lidar.azimuth_dither:
        phase = rng.uniform(0.0, 2.0 * math.pi / lidar.azimuth_steps)
    dirs = lidar.ray_directions(phase)
    origin = pose.translation
    dirs_world = dirs @ pose.rotation.T

    t_hit = np.full(len(dirs), np.inf)
    if world.ground_z is not None:
        t_hit = np.minimum(t_hit, _intersect_ground(origin, dirs_world, world.ground_z))
    if world.tree_count:
        centers = world.tree_centers
        near = (
            np.linalg.norm(centers[:, :2] - origin[:2], axis=1)
            <= lidar.max_range + world.tree_radii + 1.0
        )
        base = world.ground_z if world.ground_z is not None else 0.0
        for i in np.nonzero(near)[0]:
            t_c = _intersect_cylinder(
                origin,
                dirs_world,
                centers[i],
                world.tree_radii[i],
                centers[i, 2],
                centers[i, 2] + world.tree_heights[i],
            )
            t_hit = np.minimum(t_hit, t_c)

    hit = t_hit <= lidar.max_range
    ranges = t_hit[hit]
    if lidar.range_noise_sigma > 0.0:
        ranges = ranges + rng.normal(0.0, lidar.range_noise_sigma, len(ranges))
    return PointCloud(dirs[hit] * ranges[:, None])


def gen_gnss(
    true_pose: RigidTransform,
    noise: SensorNoise,
    under_canopy: bool,
    seed: int,
    time: float = 0.0,
) -> GnssFix:
    """GNSS fix at the true position plus a sample from the selected covariance;
    the reported covariance equals the sampling covariance."""
    cov = noise.gnss_cov_canopy if under_canopy else noise.gnss_cov_open
    rng = _rng(seed, _TAG_GNSS)
    chol = np.linalg.cholesky(cov)
    position = true_pose.translation + chol @ rng.standard_normal(3)
    status = "rtk_float" if under_canopy else "rtk_fixed"
    return GnssFix(time, position, cov.copy(), status)


def gen_imu(
    true_pose: RigidTransform, noise: SensorNoise, seed: int, time: float = 0.0
) -> ImuAttitude:
    """IMU attitude: unbiased roll/pitch noise, magnetic heading with bias.

    The returned rotation's yaw equals the sampled magnetic heading, matching
    how a magnetometer-aided AHRS reports attitude.
    """
    rng = _rng(seed, _TAG_IMU)
    yaw, pitch, roll = matrix_to_euler_zyx(true_pose.rotation)
    s = noise.attitude_noise_sigma
    noisy_roll = roll + (rng.normal(0.0, s) if s > 0 else 0.0)
    noisy_pitch = pitch + (rng.normal(0.0, s) if s > 0 else 0.0)
    mag = wrap_angle(yaw + noise.mag_heading_bias + (rng.normal(0.0, s) if s > 0 else 0.0))
    attitude = euler_zyx_to_matrix(mag, noisy_pitch, noisy_roll)
    return ImuAttitude(time, attitude, s * s, mag)


def gen_trajectory(
    kind: str,
    length: float,
    step: float,
    height: float = 1.5,
    speed: float = 1.0,
    pitch_amplitude: float = math.radians(5.0),
) -> list[tuple[float, RigidTransform]]:
    """Poses along a path at fixed arc-length steps, heading tangent to it.

    kind "straight": along +x. kind "loop": a circle of circumference
    `length` returning exactly to the start pose. kind "rough": straight with
    bounded sinusoidal pitch and roll excursions.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    n = int(round(length / step))
    poses = []
    for k in range(n + 1):
        s = k * step
        t = s / speed
        if kind == "straight":
            rot = np.eye(3)
            pos = np.array([s, 0.0, height])
        elif kind == "loop":
            radius = length / (2.0 * math.pi)
            theta = 2.0 * math.pi * k / n
            pos = np.array([radius * math.sin(theta), radius * (1.0 - math.cos(theta)), height])
            rot = euler_zyx_to_matrix(theta, 0.0, 0.0)
        elif kind == "rough":
            wavelength = 20.0
            pitch = pitch_amplitude * math.sin(2.0 * math.pi * s / wavelength)
            roll = 0.5 * pitch_amplitude * math.sin(2.0 * math.pi * s / wavelength + 1.0)
            rot = euler_zyx_to_matrix(0.0, pitch, roll)
            pos = np.array([s, 0.0, height])
        else:
            raise ValueError(f"unknown trajectory kind: {kind}")
        poses.append((t, RigidTransform(rot, pos)))
    return poses
