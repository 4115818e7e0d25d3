"""Text file formats: key=value configs, sensor CSVs, trajectory CSVs.

All writes are atomic (write to a temp file in the same directory, then
rename). Floats are printed with 9 significant digits so CSV round trips
preserve that precision.
"""

from __future__ import annotations

import csv
import io as _stdio
import logging
import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ConfigError, SensorCsvError
from .geometry import RigidTransform, is_positive_definite
from .penalties import GNSS_STATUSES, GnssFix, ImuAttitude

log = logging.getLogger(__name__)

GNSS_COLUMNS = (
    "time", "e", "n", "u",
    "cov_ee", "cov_nn", "cov_uu", "cov_en", "cov_eu", "cov_nu",
    "status",
)
IMU_COLUMNS = ("time", "qw", "qx", "qy", "qz", "mag_heading")
TRAJECTORY_COLUMNS = ("time", "x", "y", "z", "qw", "qx", "qy", "qz")


def fmt(value) -> str:
    """Format a number with 9 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def atomic_write(path, data: str | bytes) -> None:
    """Write a whole file via temp-then-rename so readers never see partial content."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_keyvalues(text: str, source: str = "<config>") -> dict:
    """Parse flat `key = value` lines with `#` comments.

    Repeated keys collect into a list. Raises ConfigError with the offending
    line number on malformed lines.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            if not isinstance(out[key], list):
                out[key] = [out[key]]
            out[key].append(value)
        else:
            out[key] = value
    return out


def read_keyvalues(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    return parse_keyvalues(text, source=str(path))


def format_keyvalues(pairs) -> str:
    lines = []
    for key, value in pairs:
        if isinstance(value, (float, np.floating, int, np.integer, bool, np.bool_)):
            value = fmt(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _canonical_quat_wxyz(rotation: np.ndarray) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(rotation).as_quat()
    q = np.array([w, x, y, z])
    for c in q:
        if c > 0.0:
            break
        if c < 0.0:
            q = -q
            break
    return q


def _rotation_from_quat_wxyz(qw, qx, qy, qz) -> np.ndarray:
    norm = float(np.sqrt(qw * qw + qx * qx + qy * qy + qz * qz))
    if norm < 1e-12:
        raise ValueError("zero quaternion")
    return Rotation.from_quat([qx / norm, qy / norm, qz / norm, qw / norm]).as_matrix()


def write_gnss_csv(fixes, path) -> None:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GNSS_COLUMNS)
    for f in fixes:
        c = f.covariance
        w.writerow(
            [fmt(f.time), fmt(f.position[0]), fmt(f.position[1]), fmt(f.position[2]),
             fmt(c[0, 0]), fmt(c[1, 1]), fmt(c[2, 2]),
             fmt(c[0, 1]), fmt(c[0, 2]), fmt(c[1, 2]), f.status]
        )
    atomic_write(path, buf.getvalue())


def write_imu_csv(attitudes, path) -> None:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(IMU_COLUMNS)
    for a in attitudes:
        q = _canonical_quat_wxyz(a.attitude)
        w.writerow([fmt(a.time), fmt(q[0]), fmt(q[1]), fmt(q[2]), fmt(q[3]),
                    fmt(a.raw_magnetic_heading)])
    atomic_write(path, buf.getvalue())


def _check_monotone(times, path):
    if (np.diff(times) < 0).any():
        raise SensorCsvError(f"{path}: timestamps are not sorted")


def read_sensor_csv(path) -> tuple[list, list]:
    """Read a GNSS or IMU CSV; returns (fixes, attitudes), one of them empty.

    The header decides the record type. GNSS rows whose covariance is not
    positive definite are rejected with a warning. Missing columns or
    non-monotone timestamps raise SensorCsvError.
    """
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames
        if header is None:
            raise SensorCsvError(f"{path}: empty file")
        cols = set(header)
        if set(GNSS_COLUMNS) <= cols:
            fixes = _read_gnss_rows(reader, path)
            _check_monotone(np.array([f.time for f in fixes]), path)
            return fixes, []
        if set(IMU_COLUMNS) <= cols:
            atts = _read_imu_rows(reader, path)
            _check_monotone(np.array([a.time for a in atts]), path)
            return [], atts
        missing_gnss = set(GNSS_COLUMNS) - cols
        missing_imu = set(IMU_COLUMNS) - cols
        raise SensorCsvError(
            f"{path}: header matches neither schema "
            f"(GNSS missing {sorted(missing_gnss)}, IMU missing {sorted(missing_imu)})"
        )


def _read_gnss_rows(reader, path):
    fixes = []
    rejected = 0
    for lineno, row in enumerate(reader, start=2):
        try:
            cov = np.array(
                [
                    [float(row["cov_ee"]), float(row["cov_en"]), float(row["cov_eu"])],
                    [float(row["cov_en"]), float(row["cov_nn"]), float(row["cov_nu"])],
                    [float(row["cov_eu"]), float(row["cov_nu"]), float(row["cov_uu"])],
                ]
            )
            position = [float(row["e"]), float(row["n"]), float(row["u"])]
            time = float(row["time"])
            status = row["status"].strip()
        except (TypeError, ValueError, KeyError) as exc:
            raise SensorCsvError(f"{path}:{lineno}: bad GNSS row ({exc})")
        if status not in GNSS_STATUSES:
            raise SensorCsvError(f"{path}:{lineno}: unknown status {status!r}")
        if not is_positive_definite(cov):
            rejected += 1
            log.warning("%s:%d: covariance not positive definite, row rejected", path, lineno)
            continue
        fixes.append(GnssFix(time, position, cov, status))
    if rejected:
        log.warning("%s: rejected %d GNSS rows", path, rejected)
    return fixes


def _read_imu_rows(reader, path):
    atts = []
    for lineno, row in enumerate(reader, start=2):
        try:
            rot = _rotation_from_quat_wxyz(
                float(row["qw"]), float(row["qx"]), float(row["qy"]), float(row["qz"])
            )
            atts.append(ImuAttitude(float(row["time"]), rot,
                                    raw_magnetic_heading=float(row["mag_heading"])))
        except (TypeError, ValueError, KeyError) as exc:
            raise SensorCsvError(f"{path}:{lineno}: bad IMU row ({exc})")
    return atts


def write_trajectory_csv(trajectory, path) -> None:
    """Trajectory rows: time plus pose as position and wxyz quaternion."""
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for time, pose in trajectory:
        q = _canonical_quat_wxyz(pose.rotation)
        t = pose.translation
        w.writerow([fmt(time), fmt(t[0]), fmt(t[1]), fmt(t[2]),
                    fmt(q[0]), fmt(q[1]), fmt(q[2]), fmt(q[3])])
    atomic_write(path, buf.getvalue())


def read_trajectory_csv(path) -> list:
    path = Path(path)
    out = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not set(TRAJECTORY_COLUMNS) <= set(reader.fieldnames):
            raise SensorCsvError(f"{path}: expected columns {TRAJECTORY_COLUMNS}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rot = _rotation_from_quat_wxyz(
                    float(row["qw"]), float(row["qx"]), float(row["qy"]), float(row["qz"])
                )
                pose = RigidTransform(rot, [float(row["x"]), float(row["y"]), float(row["z"])])
                out.append((float(row["time"]), pose))
            except (TypeError, ValueError) as exc:
                raise SensorCsvError(f"{path}:{lineno}: bad trajectory row ({exc})")
    return out
