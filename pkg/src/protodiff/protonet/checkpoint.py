"""Versioned binary checkpoint container.

Layout: 8-byte magic, uint32 format version, uint64 JSON header length, the
JSON header (config echo plus an ordered array index with names/shapes), then
the raw little-endian float32 array payloads back to back. Round-trips are
bit-exact.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PDIFCKPT"
VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], config: dict) -> None:
    index = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        index.append({"name": name, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    header = json.dumps({"config": config, "arrays": index}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(header)))
        f.write(header)
        for blob in payloads:
            f.write(blob)


def load_checkpoint(path):
    """Returns (config dict, ordered dict of float32 arrays)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 8 + 12
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        arrays[entry["name"]] = arr.reshape(shape).copy()
        off += count * 4
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return header["config"], arrays


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
