"""Checkpoints and tabular output.

A checkpoint is ``b"SNSC"``, a u16 format version, a u32 header length, a JSON
header (time, step counter, lambda, K, monitor state, seed, config hash, field
layout), the field snapshots in the spectral snapshot format, and a trailing
CRC-32 of everything before it.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import zlib

import numpy as np

from .spectral import SpectralField, TorusGrid, decode_snapshot, encode_snapshot

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "write_csv", "write_json"]

MAGIC = b"SNSC"
VERSION = 1
_PRE = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


def _tolist(a):
    a = np.asarray(a)
    if a.dtype == object:
        return [str(x) for x in a.ravel()] if a.ndim else str(a)
    return a.tolist()


def save_checkpoint(path, state, dpd, monitor, seed: int, config_hash: str) -> None:
    g = state.model.grid
    fields = {"X": state.X.Xhat, "Y": state.Y, "w": state.w, "wH": state.wH, "wL": state.wL,
              "u_r": state.X.initial_rough.coeffs if state.X.initial_rough is not None else np.zeros_like(state.w)}
    if dpd is not None:
        fields["v"] = dpd.v
        fields["X_dpd"] = dpd.X.Xhat
    batch = list(state.w.shape[:-3])
    header = {
        "t": state.t, "step": state.step_index, "seed": seed, "config_hash": config_hash,
        "n": g.n, "dealias": g.dealias, "batch": batch, "fields": list(fields),
        "lam": _tolist(state.lam), "K": _tolist(state.K), "saturated": _tolist(state.saturated),
        "stream": {"seed": state.stream.seed, "trajectories": list(state.stream.trajectories),
                   "purpose": state.stream.purpose, "substeps": state.stream.substeps},
        "monitor": {"w_threshold": _tolist(monitor.w_threshold), "alpha0": monitor.alpha0,
                    "kappa": monitor.kappa, "T": _tolist(monitor.T), "cause": _tolist(monitor.cause),
                    "Tbar": _tolist(monitor.Tbar)},
    }
    head = json.dumps(header).encode()
    parts = [_PRE.pack(MAGIC, VERSION, len(head)), head]
    for name, c in fields.items():
        flat = np.asarray(c).reshape((-1, 2, g.n, g.n))
        for f in flat:
            parts.append(encode_snapshot(SpectralField(g, f)))
    body = b"".join(parts)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))
    os.replace(tmp, path)


def load_checkpoint(path, grid: TorusGrid | None = None) -> dict:
    """Read and validate a checkpoint; raises :class:`CheckpointError` on any corruption."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(buf) < _PRE.size + 4:
        raise CheckpointError("checkpoint truncated")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted)")
    magic, version, hlen = _PRE.unpack_from(body, 0)
    if magic != MAGIC:
        raise CheckpointError(f"not a checkpoint (magic {magic!r})")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(body[_PRE.size:_PRE.size + hlen])
    except ValueError as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from exc
    if grid is not None and grid.n != header["n"]:
        raise CheckpointError(f"checkpoint is for n={header['n']}, config has n={grid.n}")
    off = _PRE.size + hlen
    batch = tuple(header["batch"])
    count = int(np.prod(batch, dtype=np.int64)) if batch else 1
    n = header["n"]
    fields = {}
    try:
        for name in header["fields"]:
            items = []
            for _ in range(count):
                f, _, off = decode_snapshot(body, off, header["dealias"])
                items.append(f.coeffs)
            fields[name] = np.stack(items).reshape(batch + (2, n, n)).copy()
    except ValueError as exc:
        raise CheckpointError(f"bad field data: {exc}") from exc
    if off != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    return {"header": header, "fields": fields}


def write_csv(path, rows: list[dict], columns, config_hash: str) -> None:
    """CSV with a ``# config_hash=...`` comment line followed by the header row."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in columns})


def write_json(path, payload: dict, config_hash: str) -> None:
    data = {"config_hash": config_hash, **payload}
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
