"""Binary snapshot format for grids, field sets, and scalar metadata.

Layout: magic ``P3DS``, version u32, grid dims (3 x u32), the three axis
arrays as f64, then a counted list of named field blocks (u32 name length,
utf-8 name, row-major f64 data with z fastest), then a counted list of
named f64 scalars.  Everything little-endian.  Writing preserves insertion
order, so write-read-write is byte-identical.
"""

import struct

import numpy as np

from .errors import VersionMismatch
from .grid import Grid3, FieldState

MAGIC = b"P3DS"
VERSION = 1


def _write_name(fh, name):
    raw = name.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_name(fh):
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def _read_f64(fh, count):
    data = fh.read(8 * count)
    if len(data) != 8 * count:
        raise VersionMismatch("snapshot truncated")
    return np.frombuffer(data, dtype="<f8").copy()


def write_snapshot(path, grid, fields, scalars=None):
    """Write a grid plus named 3D fields and named scalars."""
    scalars = scalars or {}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        nx, ny, nz = grid.shape
        fh.write(struct.pack("<III", nx, ny, nz))
        for axis in (grid.x_nodes, grid.y_nodes, grid.z_nodes):
            fh.write(np.ascontiguousarray(axis, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(fields)))
        for name, data in fields.items():
            if data.shape != grid.shape:
                raise ValueError(f"field {name!r} shape {data.shape} != grid {grid.shape}")
            _write_name(fh, name)
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", len(scalars)))
        for name, value in scalars.items():
            _write_name(fh, name)
            fh.write(struct.pack("<d", float(value)))


def read_snapshot(path):
    """Read a snapshot; returns (grid, fields dict, scalars dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise VersionMismatch(f"bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise VersionMismatch(f"unsupported snapshot version {version}")
        nx, ny, nz = struct.unpack("<III", fh.read(12))
        grid = Grid3(_read_f64(fh, nx), _read_f64(fh, ny), _read_f64(fh, nz))
        (nfields,) = struct.unpack("<I", fh.read(4))
        fields = {}
        for _ in range(nfields):
            name = _read_name(fh)
            fields[name] = _read_f64(fh, nx * ny * nz).reshape(nx, ny, nz)
        (nscalars,) = struct.unpack("<I", fh.read(4))
        scalars = {}
        for _ in range(nscalars):
            name = _read_name(fh)
            (scalars[name],) = struct.unpack("<d", fh.read(8))
    return grid, fields, scalars


def write_state(path, state):
    """Snapshot a FieldState including its derived arrays."""
    fields = {
        "u": state.u,
        "v": state.v,
        "q": state.q,
        "int_dx_u": state.int_dx_u,
        "int_dy_v": state.int_dy_v,
        "psi": state.psi,
    }
    write_snapshot(path, state.grid, fields, {"iterate_index": state.iterate_index})


def read_state(path):
    """Load a FieldState snapshot; derived arrays are taken as stored."""
    grid, fields, scalars = read_snapshot(path)
    for key in ("u", "v", "q", "int_dx_u", "int_dy_v", "psi"):
        if key not in fields:
            raise VersionMismatch(f"state snapshot missing field {key!r}")
    return FieldState(
        grid=grid,
        u=fields["u"],
        v=fields["v"],
        q=fields["q"],
        int_dx_u=fields["int_dx_u"],
        int_dy_v=fields["int_dy_v"],
        psi=fields["psi"],
        iterate_index=int(scalars.get("iterate_index", 0)),
    )
