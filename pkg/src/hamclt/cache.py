"""Binary cache for Gram factors and coefficient tensors.

File layout (all integers little-endian)::

    8 bytes   magic  b"HAMCLT\\x00\\x01"
    4 bytes   header length H (uint32)
    H bytes   UTF-8 JSON header: {"meta": {...}, "arrays": [{"name", "dtype", "shape", "offset", "nbytes"}]}
    ...       raw array bytes in C order, little-endian, at the recorded offsets
              (offsets count from the end of the header)

Entries are keyed by the SHA-256 of the canonical JSON of the key mapping.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HAMCLT\x00\x01"


def cache_key(key: dict) -> str:
    return hashlib.sha256(json.dumps(key, sort_keys=True, separators=(",", ":"), default=str).encode()).hexdigest()


def write_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes()
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "arrays": entries}, sort_keys=True).encode()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    os.replace(tmp, path)


def read_arrays(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a cache file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        body = fh.read()
    arrays = {}
    for e in header["arrays"]:
        buf = body[e["offset"]: e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return arrays, header["meta"]


class ArrayCache:
    """Directory of cache files named by key hash."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path(self, key: dict) -> Path:
        return self.directory / f"{cache_key(key)}.bin"

    def get(self, key: dict):
        p = self.path(key)
        if not p.exists():
            return None
        arrays, meta = read_arrays(p)
        if meta.get("key") != json.loads(json.dumps(key, default=str)):
            return None
        return arrays

    def put(self, key: dict, arrays: dict) -> Path:
        p = self.path(key)
        write_arrays(p, arrays, {"key": json.loads(json.dumps(key, default=str))})
        return p
