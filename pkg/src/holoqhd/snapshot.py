"""Grid snapshot binary format and CSV exports.

Layout (little endian)::

    b"HQHD"  u32 version  u32 axes  u32 dims[axes]  f64 extents[axes]
    u32 components  then f64 data, component-major and row-major

Complex data is stored as interleaved (re, im) pairs; whether a file holds
real or complex samples follows from its size.
"""
import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

from holoqhd.errors import SnapshotFormatError
from holoqhd.fields import Grid

MAGIC = b"HQHD"
VERSION = 1


@dataclass
class Snapshot:
    grid: Grid
    values: np.ndarray  # (components,) + dims

    @property
    def components(self):
        return self.values.shape[0]

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def field(self):
        """Values with a scalar field's component axis dropped."""
        return self.values[0] if self.components == 1 else self.values


def encode(grid, values):
    values = np.asarray(values)
    if values.shape == grid.dims:
        values = values[None]
    if values.shape[1:] != grid.dims:
        raise ValueError(f"values shape {values.shape} does not match grid {grid.dims}")
    head = [MAGIC, struct.pack("<II", VERSION, grid.ndim),
            struct.pack(f"<{grid.ndim}I", *grid.dims),
            struct.pack(f"<{grid.ndim}d", *grid.extents),
            struct.pack("<I", values.shape[0])]
    if np.iscomplexobj(values):
        data = np.ascontiguousarray(values, dtype="<c16")
    else:
        data = np.ascontiguousarray(values, dtype="<f8")
    return b"".join(head) + data.tobytes()


def write_snapshot(path, grid, values):
    with open(path, "wb") as fh:
        fh.write(encode(grid, values))


def _unpack(buf, fmt, offset, what):
    size = struct.calcsize(fmt)
    if len(buf) < offset + size:
        raise SnapshotFormatError(f"truncated header while reading {what}", offset)
    return struct.unpack_from(fmt, buf, offset), offset + size


def decode(buf):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise SnapshotFormatError("bad magic, expected HQHD", 0)
    (version,), off = _unpack(buf, "<I", 4, "version")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported format version {version}", 4)
    (axes,), off = _unpack(buf, "<I", off, "axis count")
    if axes not in (1, 2, 3):
        raise SnapshotFormatError(f"axis count {axes} not in 1..3", 8)
    dims_off = off
    dims, off = _unpack(buf, f"<{axes}I", off, "dims")
    for i, n in enumerate(dims):
        if n < 4 or n % 2:
            raise SnapshotFormatError(f"dim {n} must be even and at least 4", dims_off + 4 * i)
    ext_off = off
    extents, off = _unpack(buf, f"<{axes}d", off, "extents")
    for i, e in enumerate(extents):
        if not (np.isfinite(e) and e > 0):
            raise SnapshotFormatError(f"extent {e} must be positive", ext_off + 8 * i)
    comp_off = off
    (comps,), off = _unpack(buf, "<I", off, "component count")
    if comps < 1:
        raise SnapshotFormatError("component count must be positive", comp_off)
    count = comps * int(np.prod(dims))
    payload = len(buf) - off
    if payload == 8 * count:
        data = np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(float)
    elif payload == 16 * count:
        data = np.frombuffer(buf, dtype="<c16", count=count, offset=off).astype(complex)
    else:
        raise SnapshotFormatError(
            f"payload of {payload} bytes fits neither {count} real nor complex samples", off)
    return Snapshot(Grid(dims, extents), data.reshape((comps,) + tuple(dims)))


def read_snapshot(path):
    with open(path, "rb") as fh:
        return decode(fh.read())


def _fmt(x):
    return repr(float(x))


def slice_rows(snap, axis=0, index=None):
    """Samples along grid ``axis`` through ``index`` (default: the centre node on other axes)."""
    g = snap.grid
    if not 0 <= axis < g.ndim:
        raise ValueError(f"axis {axis} out of range")
    if index is None:
        index = tuple(n // 2 for n in g.dims)
    sel = tuple(slice(None) if a == axis else index[a] for a in range(g.ndim))
    coord = g.coordinates()[axis]
    cols = [snap.values[c][sel] for c in range(snap.components)]
    header = [f"x{axis}"]
    for c in range(snap.components):
        header += [f"re{c}", f"im{c}"] if snap.is_complex else [f"v{c}"]
    rows = []
    for i in range(g.dims[axis]):
        row = [_fmt(coord[i])]
        for col in cols:
            row += [_fmt(col[i].real), _fmt(col[i].imag)] if snap.is_complex else [_fmt(col[i])]
        rows.append(row)
    return header, rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def read_slice_csv(path):
    """Inverse of the slice export: coordinates and an array of values per component."""
    header, rows = read_csv(path)
    data = np.array([[float(x) for x in row] for row in rows])
    coord = data[:, 0]
    if header[1].startswith("re"):
        vals = data[:, 1::2] + 1j * data[:, 2::2]
    else:
        vals = data[:, 1:]
    return coord, vals.T


def write_filament_csv(path, nodes):
    write_csv(path, ["x", "y", "z"], [[_fmt(v) for v in p] for p in nodes])


def read_filament_csv(path):
    header, rows = read_csv(path)
    if header != ["x", "y", "z"]:
        raise ValueError("filament CSV must have header x,y,z")
    return np.array([[float(v) for v in row] for row in rows])


def filament_rows(t, nodes):
    return [[_fmt(t), str(i)] + [_fmt(v) for v in p] for i, p in enumerate(nodes)]


FILAMENT_TRAJECTORY_HEADER = ["time", "node", "x", "y", "z"]
