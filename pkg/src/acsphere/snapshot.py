"""Binary field snapshots.

Layout (all little-endian)::

    4 bytes   magic b"ACS3"
    u32       format version (1)
    u32 x 3   n_eta, n_phi1, n_phi2
    f64       eps
    f64       time
    f64 x N   values, N = n_eta * n_phi1 * n_phi2, index
              (i_eta * n_phi1 + i_phi1) * n_phi2 + i_phi2
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SnapshotError

MAGIC = b"ACS3"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIdd")


@dataclass
class Snapshot:
    dims: tuple
    eps: float
    time: float
    values: np.ndarray


def write_snapshot(path, dims, eps: float, time: float, values) -> Path:
    path = Path(path)
    values = np.ascontiguousarray(values, dtype="<f8").ravel()
    n = int(np.prod(dims))
    if values.size != n:
        raise SnapshotError(f"field has {values.size} values but dims {tuple(dims)} need {n}")
    head = _HEADER.pack(MAGIC, VERSION, *map(int, dims), float(eps), float(time))
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(values.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc}") from exc
    return path


def read_snapshot(path) -> Snapshot:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, n0, n1, n2, eps, time = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported format version {version}")
    n = n0 * n1 * n2
    payload = len(data) - _HEADER.size
    if payload != 8 * n:
        raise SnapshotError(
            f"{path}: dims {(n0, n1, n2)} need {8 * n} payload bytes, found {payload}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    return Snapshot((n0, n1, n2), eps, time, values.reshape(n0, n1, n2))
