"""PLY point-cloud reader/writer (ASCII and binary little-endian).

Clouds are written with double-precision x, y, z properties (plus nx, ny, nz
when normals are present) so binary round trips are bit-exact. ASCII files
carry 9 significant digits. The reader accepts float and double scalar
properties in any order and ignores extra scalar properties.
"""

from __future__ import annotations

import io as _stdio
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .errors import PlyFormatError, PlyTruncatedError, PlyUnsupportedError
from .io import atomic_write, fmt

_SCALAR_TYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "char": "<i1", "int8": "<i1",
    "uchar": "<u1", "uint8": "<u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
}


def write_ply(cloud: PointCloud, path, ascii: bool = False) -> None:
    """Write a cloud (points and optional normals) to a PLY file."""
    names = ["x", "y", "z"]
    columns = [cloud.points[:, 0], cloud.points[:, 1], cloud.points[:, 2]]
    if cloud.normals is not None:
        names += ["nx", "ny", "nz"]
        columns += [cloud.normals[:, 0], cloud.normals[:, 1], cloud.normals[:, 2]]

    header = ["ply"]
    header.append("format ascii 1.0" if ascii else "format binary_little_endian 1.0")
    header.append(f"element vertex {len(cloud)}")
    header += [f"property double {n}" for n in names]
    header.append("end_header")

    if ascii:
        buf = _stdio.StringIO()
        buf.write("\n".join(header) + "\n")
        data = np.column_stack(columns)
        for row in data:
            buf.write(" ".join(fmt(v) for v in row) + "\n")
        atomic_write(path, buf.getvalue())
    else:
        rec = np.empty(len(cloud), dtype=[(n, "<f8") for n in names])
        for n, col in zip(names, columns):
            rec[n] = col
        atomic_write(path, ("\n".join(header) + "\n").encode("ascii") + rec.tobytes())


def _parse_header(stream, path):
    def next_line():
        line = stream.readline()
        if not line:
            raise PlyFormatError(f"{path}: header ends before end_header")
        return line.decode("ascii", errors="replace").strip()

    if next_line() != "ply":
        raise PlyFormatError(f"{path}: missing 'ply' magic")
    fmt_line = next_line()
    if fmt_line == "format ascii 1.0":
        is_ascii = True
    elif fmt_line == "format binary_little_endian 1.0":
        is_ascii = False
    elif fmt_line.startswith("format "):
        raise PlyUnsupportedError(f"{path}: unsupported format {fmt_line!r}")
    else:
        raise PlyFormatError(f"{path}: expected format line, got {fmt_line!r}")

    count = None
    properties = []  # (name, numpy type) for the vertex element
    current_element = None
    while True:
        line = next_line()
        if line == "end_header":
            break
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "element":
            if len(parts) != 3:
                raise PlyFormatError(f"{path}: malformed element line {line!r}")
            current_element = parts[1]
            try:
                n = int(parts[2])
            except ValueError:
                raise PlyFormatError(f"{path}: bad element count in {line!r}")
            if current_element == "vertex":
                count = n
            elif n > 0:
                raise PlyUnsupportedError(f"{path}: unsupported element {parts[1]!r}")
        elif parts[0] == "property":
            if current_element != "vertex":
                continue
            if parts[1] == "list":
                raise PlyUnsupportedError(f"{path}: list properties are not supported")
            if len(parts) != 3:
                raise PlyFormatError(f"{path}: malformed property line {line!r}")
            if parts[1] not in _SCALAR_TYPES:
                raise PlyUnsupportedError(f"{path}: unsupported property type {parts[1]!r}")
            properties.append((parts[2], _SCALAR_TYPES[parts[1]]))
        else:
            raise PlyFormatError(f"{path}: unexpected header line {line!r}")

    if count is None:
        raise PlyFormatError(f"{path}: no vertex element")
    names = [n for n, _ in properties]
    for required in ("x", "y", "z"):
        if required not in names:
            raise PlyFormatError(f"{path}: vertex element lacks property {required!r}")
    return is_ascii, count, properties


def read_ply(path) -> PointCloud:
    """Read a PLY file into a PointCloud; normals load when nx, ny, nz exist."""
    path = Path(path)
    with open(path, "rb") as f:
        is_ascii, count, properties = _parse_header(f, path)
        names = [n for n, _ in properties]
        if is_ascii:
            table = np.empty((count, len(properties)))
            for i in range(count):
                line = f.readline()
                if not line:
                    raise PlyTruncatedError(f"{path}: body ends at vertex {i} of {count}")
                tokens = line.split()
                if len(tokens) != len(properties):
                    raise PlyFormatError(
                        f"{path}: vertex {i} has {len(tokens)} values, expected {len(properties)}"
                    )
                try:
                    table[i] = [float(t) for t in tokens]
                except ValueError as exc:
                    raise PlyFormatError(f"{path}: vertex {i}: {exc}")
        else:
            dtype = np.dtype([(n, t) for n, t in properties])
            raw = f.read(dtype.itemsize * count)
            if len(raw) < dtype.itemsize * count:
                raise PlyTruncatedError(
                    f"{path}: body has {len(raw)} bytes, expected {dtype.itemsize * count}"
                )
            rec = np.frombuffer(raw, dtype=dtype, count=count)
            table = np.column_stack([rec[n].astype(float) for n in names]) if count else np.zeros(
                (0, len(names))
            )

    cols = {n: table[:, i] for i, n in enumerate(names)}
    points = np.column_stack([cols["x"], cols["y"], cols["z"]]) if count else np.zeros((0, 3))
    normals = None
    if all(k in cols for k in ("nx", "ny", "nz")):
        normals = np.column_stack([cols["nx"], cols["ny"], cols["nz"]])
    return PointCloud(points, normals)
