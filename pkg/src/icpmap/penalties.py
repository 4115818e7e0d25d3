"""GNSS/IMU penalty construction and magnetometer heading calibration.

Conventions: positions live in a local east-north-up (ENU) frame, headings
are angles in the ENU x-y plane measured counterclockwise from +x (east), so
a heading h means body-forward points along (cos h, sin h, 0). Attitudes are
body-to-ENU rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientMotionError
from .geometry import (
    RigidTransform,
    heading_of_rotation,
    rot_z,
    wrap_angle,
)

GNSS_STATUSES = ("rtk_fixed", "rtk_float", "standalone")

_EX = np.array([1.0, 0.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


@dataclass
class GnssFix:
    """Timestamped ENU position with its 3x3 covariance."""

    time: float
    position: np.ndarray
    covariance: np.ndarray
    status: str = "rtk_fixed"

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(3, 3)


@dataclass
class ImuAttitude:
    """Timestamped body-to-ENU rotation plus the raw magnetometer heading.

    The rotation's roll and pitch are trusted (gravity-referenced); its yaw
    equals the raw magnetic heading and inherits the magnetometer bias.
    """

    time: float
    attitude: np.ndarray
    roll_pitch_cov: float = 0.0
    raw_magnetic_heading: float = 0.0

    def __post_init__(self):
        self.attitude = np.asarray(self.attitude, dtype=float).reshape(3, 3)


@dataclass
class Penalty:
    """A known-correspondence point pair: map-frame target, scan-frame anchor."""

    map_point: np.ndarray
    scan_point: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.map_point = np.asarray(self.map_point, dtype=float).reshape(3)
        self.scan_point = np.asarray(self.scan_point, dtype=float).reshape(3)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(3, 3)


@dataclass
class PenaltySet:
    penalties: list = field(default_factory=list)
    provenance: str = "gnss_only"

    def __len__(self) -> int:
        return len(self.penalties)


def penalty_residual(p: Penalty, t: RigidTransform) -> np.ndarray:
    """Error vector of a penalty at transform t: map_point - t(scan_point)."""
    return p.map_point - t.apply(p.scan_point)


def make_gnss_penalty(fix: GnssFix, scan_origin=(0.0, 0.0, 0.0)) -> PenaltySet:
    """Single positional penalty tying the scan origin to the GNSS fix."""
    pen = Penalty(fix.position.copy(), np.asarray(scan_origin, dtype=float), fix.covariance.copy())
    return PenaltySet([pen], "gnss_only")


def make_three_point_penalties(
    fix: GnssFix,
    att: ImuAttitude,
    heading: float,
    arm_length: float = 1.0,
    aux_cov_scale: float = 1.0,
    scan_origin=(0.0, 0.0, 0.0),
) -> PenaltySet:
    """GNSS point plus gravity and heading arms that pin the full orientation.

    Map-frame targets: the fix itself, a point arm_length straight below it,
    and a point arm_length along `heading` in the x-y plane. The two scan-frame
    arm anchors are projected through the de-yawed IMU attitude, so when the
    fix, attitude roll/pitch and heading agree with the true pose all three
    residuals vanish.
    """
    if arm_length <= 0.0:
        raise ValueError("arm_length must be positive")
    origin = np.asarray(scan_origin, dtype=float).reshape(3)
    yaw = heading_of_rotation(att.attitude)
    roll_pitch = rot_z(-yaw) @ att.attitude
    down_arm = -arm_length * (roll_pitch.T @ _EZ)
    forward_arm = arm_length * (roll_pitch.T @ _EX)

    aux_cov = aux_cov_scale * fix.covariance
    q_a = fix.position.copy()
    q_b = fix.position - arm_length * _EZ
    q_c = fix.position + arm_length * np.array([math.cos(heading), math.sin(heading), 0.0])
    pens = [
        Penalty(q_a, origin, fix.covariance.copy()),
        Penalty(q_b, origin + down_arm, aux_cov),
        Penalty(q_c, origin + forward_arm, aux_cov),
    ]
    return PenaltySet(pens, "gnss_imu_three_point")


def _interp_circular(times, angles, t):
    """Linear interpolation of an angle series after unwrapping."""
    unwrapped = np.unwrap(angles)
    return wrap_angle(float(np.interp(t, times, unwrapped)))


def estimate_heading_offset(
    gnss_track,
    imu_headings,
    min_distance: float = 10.0,
    segment_length: float | None = None,
) -> float:
    """Magnetometer heading offset from an initial stretch of GNSS track.

    Splits the track into segments of at least `segment_length` net horizontal
    displacement, takes the course over ground of each, and returns the
    displacement-weighted circular mean of (magnetometer heading - course),
    in (-pi, pi]. Subtract the result from raw magnetometer headings to get
    ENU headings.

    Raises InsufficientMotionError when the track covers less than
    min_distance of horizontal motion (the offset is unobservable while
    static).
    """
    if len(gnss_track) < 2:
        raise InsufficientMotionError("need at least two fixes")
    if segment_length is None:
        segment_length = max(1.0, min_distance / 3.0)
    pos = np.array([f.position for f in gnss_track], dtype=float)
    times = np.array([f.time for f in gnss_track], dtype=float)
    steps = np.linalg.norm(np.diff(pos[:, :2], axis=0), axis=1)
    if float(steps.sum()) < min_distance:
        raise InsufficientMotionError(
            f"track covers {steps.sum():.2f} m, need {min_distance:.2f} m of motion"
        )
    imu_times = np.array([t for t, _ in imu_headings], dtype=float)
    imu_vals = np.array([h for _, h in imu_headings], dtype=float)

    sin_sum = 0.0
    cos_sum = 0.0
    start = 0
    closed = 0
    for i in range(1, len(pos)):
        delta = pos[i, :2] - pos[start, :2]
        dist = float(np.hypot(delta[0], delta[1]))
        if dist < segment_length and i < len(pos) - 1:
            continue
        if dist <= 0.0:
            continue
        course = math.atan2(delta[1], delta[0])
        t_mid = 0.5 * (times[start] + times[i])
        mag = _interp_circular(imu_times, imu_vals, t_mid)
        diff = wrap_angle(mag - course)
        sin_sum += dist * math.sin(diff)
        cos_sum += dist * math.cos(diff)
        start = i
        closed += 1
    if closed == 0:
        raise InsufficientMotionError("no segment reached the required displacement")
    return wrap_angle(math.atan2(sin_sum, cos_sum))


def interpolate_fix(fixes, time: float) -> GnssFix:
    """Linearly interpolate a GNSS stream to one timestamp (clamped at the ends)."""
    times = np.array([f.time for f in fixes], dtype=float)
    i = int(np.searchsorted(times, time))
    if i <= 0:
        return fixes[0]
    if i >= len(fixes):
        return fixes[-1]
    a, b = fixes[i - 1], fixes[i]
    u = (time - a.time) / (b.time - a.time) if b.time > a.time else 0.0
    return GnssFix(
        time,
        (1.0 - u) * a.position + u * b.position,
        (1.0 - u) * a.covariance + u * b.covariance,
        a.status if u < 0.5 else b.status,
    )


def interpolate_attitude(attitudes, time: float) -> ImuAttitude:
    """Spherically interpolate an attitude stream to one timestamp."""
    from scipy.spatial.transform import Rotation, Slerp

    times = np.array([a.time for a in attitudes], dtype=float)
    i = int(np.searchsorted(times, time))
    if i <= 0:
        return attitudes[0]
    if i >= len(attitudes):
        return attitudes[-1]
    a, b = attitudes[i - 1], attitudes[i]
    if b.time <= a.time:
        return a
    slerp = Slerp([a.time, b.time], Rotation.from_matrix([a.attitude, b.attitude]))
    u = (time - a.time) / (b.time - a.time)
    heads = np.unwrap([a.raw_magnetic_heading, b.raw_magnetic_heading])
    return ImuAttitude(
        time,
        slerp([time]).as_matrix()[0],
        (1.0 - u) * a.roll_pitch_cov + u * b.roll_pitch_cov,
        wrap_angle((1.0 - u) * heads[0] + u * heads[1]),
    )


def gnss_course(prev: GnssFix, fix: GnssFix) -> tuple[float, float]:
    """(course over ground, horizontal speed) between two fixes."""
    delta = fix.position[:2] - prev.position[:2]
    dt = fix.time - prev.time
    dist = float(np.hypot(delta[0], delta[1]))
    speed = dist / dt if dt > 0.0 else 0.0
    return math.atan2(delta[1], delta[0]), speed


def select_heading(
    prev_fix: GnssFix | None,
    fix: GnssFix,
    att: ImuAttitude,
    heading_offset: float,
    speed_threshold: float = 0.3,
) -> float:
    """Best available ENU heading: GNSS course while moving forward, else
    offset-corrected magnetometer heading."""
    if prev_fix is not None:
        course, speed = gnss_course(prev_fix, fix)
        if speed > speed_threshold:
            return course
    return wrap_angle(att.raw_magnetic_heading - heading_offset)
