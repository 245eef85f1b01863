"""Recurrence-image file format.

16-byte header: magic "RIMG", u32 side length, u32 reserved, then the
row-major float32 little-endian matrix. A JSON sidecar next to the file
carries the segment id and pipeline config hash.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .. import PxafError
from .pipeline import RecurrenceImage

MAGIC = b"RIMG"


class BadImageFile(PxafError):
    pass


def write_rimg(path: str | Path, image: RecurrenceImage, config_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = np.ascontiguousarray(image.matrix, dtype="<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", image.n, 0))
        f.write(struct.pack("<I", 0))  # pad header to 16 bytes
        f.write(m.tobytes())
    sidecar = {"segment_id": image.segment_id, "config_hash": config_hash,
               "window_seconds": image.window_seconds}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))
    return path


def read_rimg(path: str | Path) -> RecurrenceImage:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise BadImageFile(f"{path}: bad magic {raw[:4]!r}")
    n, _ = struct.unpack("<II", raw[4:12])
    matrix = np.frombuffer(raw[16:16 + 4 * n * n], dtype="<f4").reshape(n, n).copy()
    meta = {}
    sidecar = path.with_suffix(path.suffix + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return RecurrenceImage(matrix=matrix, n=n,
                           window_seconds=meta.get("window_seconds", 4.0),
                           segment_id=meta.get("segment_id", ""))
