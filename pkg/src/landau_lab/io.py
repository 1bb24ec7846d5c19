"""Binary field snapshots and CSV tables.

VPF2 (spatial field): magic ``VPF2``, version u32, N u32, L f64, time f64,
then N*N row-major f64 samples.

VPF4 (phase-space field): magic ``VPF4``, version u32, Nx u32, Nv u32,
L f64, v_max f64, time f64, then Nx*Nx*Nv*Nv f64 samples in (x1, x2, v1, v2)
row-major order.  All little-endian.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import LandauLabError

VERSION = 1
CSV_HEADER = "# landau-lab v1"
_H2 = struct.Struct("<4sIIdd")
_H4 = struct.Struct("<4sIIIddd")


def write_vpf2(path, values, L, time=0.0):
    values = np.asarray(values, dtype="<f8")
    N = values.shape[0]
    if values.shape != (N, N):
        raise LandauLabError("snapshot-invalid", f"expected a square array, got {values.shape}")
    with open(path, "wb") as fh:
        fh.write(_H2.pack(b"VPF2", VERSION, N, float(L), float(time)))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_vpf2(path):
    """Returns (values, L, time)."""
    raw = Path(path).read_bytes()
    if len(raw) < _H2.size:
        raise LandauLabError("snapshot-invalid", "file shorter than the header")
    magic, version, N, L, t = _H2.unpack_from(raw)
    if magic != b"VPF2":
        raise LandauLabError("snapshot-invalid", f"bad magic {magic!r}")
    if version != VERSION:
        raise LandauLabError("snapshot-invalid", f"unsupported version {version}")
    body = raw[_H2.size:]
    if len(body) != 8 * N * N:
        raise LandauLabError("snapshot-invalid", f"payload {len(body)} bytes, expected {8 * N * N}")
    return np.frombuffer(body, dtype="<f8").reshape(N, N).copy(), L, t


def write_vpf4(path, values, L, v_max, time=0.0):
    """``values`` in (x1, x2, v1, v2) order."""
    values = np.asarray(values, dtype="<f8")
    Nx, Nv = values.shape[0], values.shape[2]
    if values.shape != (Nx, Nx, Nv, Nv):
        raise LandauLabError("snapshot-invalid", f"expected (Nx, Nx, Nv, Nv), got {values.shape}")
    with open(path, "wb") as fh:
        fh.write(_H4.pack(b"VPF4", VERSION, Nx, Nv, float(L), float(v_max), float(time)))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_vpf4(path):
    """Returns (values in (x1, x2, v1, v2) order, L, v_max, time)."""
    raw = Path(path).read_bytes()
    if len(raw) < _H4.size:
        raise LandauLabError("snapshot-invalid", "file shorter than the header")
    magic, version, Nx, Nv, L, v_max, t = _H4.unpack_from(raw)
    if magic != b"VPF4":
        raise LandauLabError("snapshot-invalid", f"bad magic {magic!r}")
    if version != VERSION:
        raise LandauLabError("snapshot-invalid", f"unsupported version {version}")
    body = raw[_H4.size:]
    n = Nx * Nx * Nv * Nv
    if len(body) != 8 * n:
        raise LandauLabError("snapshot-invalid", f"payload {len(body)} bytes, expected {8 * n}")
    return np.frombuffer(body, dtype="<f8").reshape(Nx, Nx, Nv, Nv).copy(), L, v_max, t


def read_snapshot(path):
    """Dispatch on the magic; returns a dict with ``values``, ``L``, ``time`` and, for VPF4, ``v_max``."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"VPF2":
        v, L, t = read_vpf2(path)
        return {"kind": "VPF2", "values": v, "L": L, "time": t}
    if magic == b"VPF4":
        v, L, vm, t = read_vpf4(path)
        return {"kind": "VPF4", "values": v, "L": L, "v_max": vm, "time": t}
    raise LandauLabError("snapshot-invalid", f"unknown magic {magic!r}")


def write_csv(path, columns, rows):
    """CSV with a version comment line, a header row and one row per record."""
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([f"{x:.12g}" if isinstance(x, (float, np.floating)) else x for x in r])


def read_csv(path):
    """Returns (columns, rows as lists of strings)."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != CSV_HEADER:
            raise LandauLabError("csv-invalid", f"missing version line in {path}")
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
