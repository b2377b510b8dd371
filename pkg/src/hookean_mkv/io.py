"""CSV writers and a self-describing binary container for grid fields.

Floats are written with 17 significant digits so identical runs produce
byte-identical files.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

MAGIC = b"HMKVFLD1"
_LEN = struct.Struct("<Q")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_records_csv(path, records: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    """Scalar diagnostics, one row per record (e.g. FP or η time series)."""
    if columns is None:
        columns = list(records[0].keys()) if records else []
    return _write_rows(path, columns, ([r[c] for c in columns] for r in records))


def write_snapshots_csv(path, snapshots) -> Path:
    """Chain ensembles as ``time, chain_id, bead_id, r_*, v_*`` rows."""
    snaps = list(snapshots)
    d = snaps[0].r.shape[-1] if snaps else 1
    header = ["time", "chain_id", "bead_id"] + [f"r{k}" for k in range(d)] + [f"v{k}" for k in range(d)]

    def rows():
        for e in snaps:
            N, B, _ = e.r.shape
            for n in range(N):
                for b in range(B):
                    yield [e.t, int(e.stream_ids[n]), b, *e.r[n, b], *e.v[n, b]]
    return _write_rows(path, header, rows())


def _multi_index(shape) -> Iterable[tuple]:
    return np.ndindex(*shape)


def write_moments_csv(path, moments) -> Path:
    """Empirical moments keyed by ``(time, bin multi-index)``."""
    ms = list(moments)
    if not ms:
        return _write_rows(path, ["time"], [])
    shape = ms[0].rho_bar.shape
    P = ms[0].flux.shape[-1]
    header = (["time"] + [f"i{a}" for a in range(len(shape))] + ["rho_bar", "count"]
              + [f"J{a}" for a in range(P)] + [f"P{a}{b}" for a in range(P) for b in range(P)])

    def rows():
        for m in ms:
            for ix in _multi_index(shape):
                yield [m.t, *ix, m.rho_bar[ix], int(m.counts[ix]), *m.flux[ix], *m.second[ix].ravel()]
    return _write_rows(path, header, rows())


def write_stress_csv(path, fields) -> Path:
    """Stress tensors keyed by ``(time, cell multi-index)``, entries row-major."""
    fs = list(fields)
    if not fs:
        return _write_rows(path, ["time"], [])
    shape = fs[0].weights.shape
    d = fs[0].tensor.shape[-1]
    header = (["time"] + [f"i{a}" for a in range(len(shape))] + ["weight"]
              + [f"K{a}{b}" for a in range(d) for b in range(d)])

    def rows():
        for f in fs:
            for ix in _multi_index(shape):
                yield [f.t, *ix, f.weights[ix], *f.tensor[ix].ravel()]
    return _write_rows(path, header, rows())


def write_flow_csv(path, fields) -> Path:
    """Cell-centred velocity and pressure, ``time, i, j, ux, uy, p``."""
    fs = list(fields)

    def rows():
        for u in fs:
            c = u.cell_velocity()
            for i, j in _multi_index(u.p.shape):
                yield [u.t, i, j, c[i, j, 0], c[i, j, 1], u.p[i, j]]
    return _write_rows(path, ["time", "i", "j", "ux", "uy", "p"], rows())


def read_csv(path) -> tuple[list[str], NDArray[np.float64]]:
    """Header and numeric body of a CSV written by this module."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, body


def write_field(path, values: NDArray, **meta) -> Path:
    """Write ``values`` with a JSON header (shape, dtype and ``meta``).

    Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON
    header, then the row-major little-endian float64 payload.
    """
    arr = np.asarray(values, dtype="<f8", order="C")
    head = {"shape": list(arr.shape), "dtype": "<f8"}
    head.update({k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in meta.items()})
    blob = json.dumps(head, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        fh.write(arr.tobytes())
    return path


def read_field(path) -> tuple[NDArray[np.float64], dict]:
    """Inverse of :func:`write_field`.

    Raises
    ------
    ValueError
        If the file is not a field container or is truncated.
    """
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a field container")
    off = len(MAGIC)
    (n,) = _LEN.unpack_from(raw, off)
    off += _LEN.size
    head = json.loads(raw[off:off + n].decode())
    off += n
    shape = tuple(head["shape"])
    count = int(np.prod(shape)) if shape else 1
    if len(raw) - off != 8 * count:
        raise ValueError(f"{path}: payload has {len(raw) - off} bytes, expected {8 * count}")
    arr = np.frombuffer(raw, dtype=head["dtype"], count=count, offset=off).reshape(shape).copy()
    return arr, head


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
