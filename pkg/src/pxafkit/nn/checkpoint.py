"""Parameter checkpoint I/O.

Layout: 8-byte magic+version header, u32 JSON index length, JSON index
(entry name, shape, dtype, byte offset/length), then one raw
little-endian data blob. Stable entry ordering by name.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .. import PxafError

MAGIC = b"PXCK0001"

_DTYPES = {"<f4": "<f4", "<f8": "<f8", "<i8": "<i8"}


class BadCheckpoint(PxafError):
    pass


def save_checkpoint(state: dict[str, np.ndarray], path: str | Path) -> str:
    """Write ``state`` to ``path``; returns the sha256 hash of the file."""
    names = sorted(state)
    index = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(state[name])
        code = arr.dtype.newbyteorder("<").str
        if code not in _DTYPES:
            arr = arr.astype("<f8")
            code = "<f8"
        raw = arr.astype(code, copy=False).tobytes()
        index.append({"name": name, "shape": list(arr.shape), "dtype": code,
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(index, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise BadCheckpoint(f"{path}: bad magic {data[:8]!r}")
    (hlen,) = struct.unpack("<I", data[8:12])
    index = json.loads(data[12:12 + hlen])
    base = 12 + hlen
    state = {}
    for entry in index:
        lo = base + entry["offset"]
        raw = data[lo: lo + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"])
        state[entry["name"]] = arr.copy()
    return state
