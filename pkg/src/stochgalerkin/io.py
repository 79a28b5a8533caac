"""Artifact formats: flat binary arrays, CSV tables, JSON documents and
git-style content hashes."""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "write_array", "read_array", "encode_array", "decode_array",
           "write_csv", "fmt", "git_blob_hash", "tree_hash", "write_json", "dumps"]

MAGIC = b"SGAL"
VERSION = 1


def encode_array(arr) -> bytes:
    """Header (magic, u32 version, u32 ndim, u64 dims...) then little-endian f8, C order."""
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
    head = MAGIC + struct.pack("<II", VERSION, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes(order="C")


def decode_array(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise ValueError("not a flat binary array (bad magic)")
    version, ndim = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported binary version {version}")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 12)
    off = 12 + 8 * ndim
    return np.frombuffer(buf, dtype="<f8", offset=off).reshape(shape).astype(np.float64)


def write_array(path, arr) -> None:
    Path(path).write_bytes(encode_array(arr))


def read_array(path) -> np.ndarray:
    return decode_array(Path(path).read_bytes())


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if x is None:
        return ""
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not JSON serialisable: {type(o)!r}")


def _round17(o):
    if isinstance(o, float):
        return float(format(o, ".17g"))
    if isinstance(o, dict):
        return {k: _round17(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_round17(v) for v in o]
    return o


def dumps(obj) -> str:
    return json.dumps(_round17(json.loads(json.dumps(obj, default=_json_default))),
                      indent=2, sort_keys=True, allow_nan=True)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def git_blob_hash(data: bytes) -> str:
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def tree_hash(files: dict) -> str:
    """Hash over sorted (name, blob hash) pairs, like a flat git tree."""
    h = hashlib.sha1()
    for name in sorted(files):
        h.update(f"{name}\0{files[name]}\n".encode())
    return h.hexdigest()
