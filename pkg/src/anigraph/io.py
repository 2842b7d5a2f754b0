"""Grid import/export and deterministic JSON/CSV artifacts.

Binary grid layout (little-endian), 64-byte header then payload::

    0   4s  magic b"WGRF"
    4   u4  version (1)
    8   u4  ndim (1 or 2)
    12  u4  reserved (0)
    16  2u8 shape (unused axes 1)
    32  f8  spacing h
    40  2f8 origin (unused axes 0)
    56  8x  padding
    64  f8[prod(shape)] values, row-major (NaN outside the domain)
    ..  u1[prod(shape)] mask codes
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import DomainError
from .graph_pde import DiscreteGraph

MAGIC = b"WGRF"
VERSION = 1
_HEADER = struct.Struct("<4sIII2Q d 2d 8x")
assert _HEADER.size == 64


# -- atomic writes ------------------------------------------------------------

def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


# -- JSON ---------------------------------------------------------------------

def fmt_float(x):
    """17 significant digits; non-finite values as strings."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


class _Raw(str):
    pass


def _normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_normalize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt_float(x) if not math.isfinite(x) else _Raw(fmt_float(x))
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _normalize(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, _Raw):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}"
                 for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    return json.dumps(obj)


def dumps(obj, indent=2):
    """Deterministic JSON: sorted keys, floats at 17 significant digits, ``"inf"``/``"nan"`` strings."""
    return _encode(_normalize(obj), indent, 0) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# -- CSV ----------------------------------------------------------------------

def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    atomic_write_text(path, csv_text(header, rows))


def grid_to_csv(path, g):
    """Rows ``(x1[, x2], w)`` for every in-domain node, row-major."""
    X = g.coords()[g.valid]
    names = [f"x{i + 1}" for i in range(g.n)] + ["w"]
    rows = [[*x, w] for x, w in zip(X.tolist(), g.values[g.valid].tolist())]
    write_csv(path, names, rows)


def grid_from_csv(path, h=None):
    """Rebuild a grid from ``(x1[, x2], w)`` rows; nodes without a full stencil become Dirichlet."""
    from .graph_pde import DIRICHLET, INTERIOR, OUTSIDE, _full_stencil

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    n = len(header) - 1
    if n not in (1, 2) or header[-1] != "w":
        raise DomainError("grid CSV must have columns x1[, x2], w")
    X, w = data[:, :n], data[:, n]
    if h is None:
        steps = np.concatenate([np.diff(np.unique(X[:, i])) for i in range(n)])
        h = float(np.min(steps))
    origin = X.min(axis=0)
    idx = np.rint((X - origin) / h).astype(int)
    if np.max(np.abs(idx * h + origin - X)) > 1e-9 * max(h, 1.0):
        raise DomainError("CSV nodes do not lie on a uniform grid")
    shape = tuple(idx.max(axis=0) + 1)
    values = np.full(shape, np.nan)
    values[tuple(idx.T)] = w
    inside = np.isfinite(values)
    interior = inside & _full_stencil(inside)
    mask = np.where(interior, INTERIOR, np.where(inside, DIRICHLET, OUTSIDE)).astype(np.int8)
    return DiscreteGraph(origin, float(h), values, mask, "imported")


def grid_to_bytes(g):
    shape = list(g.shape) + [1] * (2 - g.n)
    origin = list(map(float, g.origin)) + [0.0] * (2 - g.n)
    head = _HEADER.pack(MAGIC, VERSION, g.n, 0, *shape, float(g.h), *origin)
    vals = np.ascontiguousarray(g.values, dtype="<f8").tobytes()
    mask = np.ascontiguousarray(g.mask, dtype="u1").tobytes()
    return head + vals + mask


def grid_from_bytes(data, domain="imported"):
    if len(data) < 64:
        raise DomainError("truncated grid file")
    magic, version, ndim, _, s0, s1, h, o0, o1 = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DomainError("bad magic: not a WGRF grid")
    if version != VERSION:
        raise DomainError(f"unsupported WGRF version {version}")
    if ndim not in (1, 2):
        raise DomainError(f"unsupported dimension {ndim}")
    shape = (s0,) if ndim == 1 else (s0, s1)
    count = int(np.prod(shape))
    if len(data) != 64 + 9 * count:
        raise DomainError("grid payload size does not match the header")
    values = np.frombuffer(data, "<f8", count, 64).reshape(shape).copy()
    mask = np.frombuffer(data, "u1", count, 64 + 8 * count).reshape(shape).astype(np.int8)
    origin = np.array([o0, o1][:ndim])
    g = DiscreteGraph(origin, float(h), values, mask, domain)
    g.validate()
    return g


def write_grid(path, g):
    atomic_write_bytes(path, grid_to_bytes(g))


def read_grid(path):
    return grid_from_bytes(Path(path).read_bytes())
