"""Report and snapshot I/O.

Snapshot layout (little-endian): 5-byte magic b"LNKV1", uint32 Nr, uint32 Nz,
then Nr*Nz float64 values in row-major (r, z) order.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"LNKV1"
_HEADER = struct.Struct("<5sII")


def write_snapshot(path, u) -> Path:
    u = np.ascontiguousarray(u, dtype="<f8")
    if u.ndim != 2:
        raise ValidationError("snapshot needs a 2D field")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *u.shape))
        fh.write(u.tobytes())
    return path


def read_snapshot(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValidationError(f"{path}: truncated snapshot header")
    magic, nr, nz = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * nr * nz:
        raise ValidationError(f"{path}: expected {nr * nz} doubles, found {len(body) / 8:g}")
    return np.frombuffer(body, dtype="<f8").reshape(nr, nz).copy()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def to_json(obj) -> str:
    """Deterministic JSON (sorted keys, non-finite floats as strings)."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(obj) + "\n")
    return path
