"""ECG records and segments: domain types, file ingestion, segmentation.

Two on-disk formats are supported. CSV holds one column per channel
(header optional) in millivolts. raw16 holds little-endian signed
16-bit A/D units, one channel fully serialized after another, with a
mandatory JSON sidecar ``<name>.json`` carrying fs, n_channels, gain,
label and length; samples convert to millivolts as value/gain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .. import PxafError


class MissingSidecar(PxafError):
    pass


class LengthMismatch(PxafError):
    pass


class BadSampleWidth(PxafError):
    pass


class RecordTooShort(PxafError):
    pass


class Label(str, Enum):
    NORMAL = "Normal"
    PXAF = "PxAF"
    UNLABELED = "Unlabeled"


class Provenance(str, Enum):
    REAL = "Real"
    SYNTHETIC = "Synthetic"


class CertStatus(str, Enum):
    NOT_APPLICABLE = "NotApplicable"
    PENDING = "Pending"
    CERTIFIED = "Certified"
    REJECTED = "Rejected"


@dataclass
class EcgRecord:
    id: str
    samples: np.ndarray              # (n_channels, length) float64 millivolts
    fs: int = 128
    gain: float = 200.0
    label: Label = Label.UNLABELED

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[1] == 0:
            raise LengthMismatch(f"record {self.id}: empty channels")
        if self.fs <= 0 or self.gain <= 0:
            raise ValueError(f"record {self.id}: fs and gain must be positive")
        self.label = Label(self.label)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]


@dataclass
class Segment:
    id: str
    source: str                      # "<record id>@<start sample>" or "synthetic:<run>"
    samples: np.ndarray              # (round(4*fs),) float64 millivolts
    fs: int
    label: Label
    provenance: Provenance = Provenance.REAL
    cert_status: CertStatus = CertStatus.NOT_APPLICABLE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        self.label = Label(self.label)
        self.provenance = Provenance(self.provenance)
        self.cert_status = CertStatus(self.cert_status)
        if self.provenance is Provenance.REAL \
                and self.cert_status is not CertStatus.NOT_APPLICABLE:
            raise ValueError(
                f"segment {self.id}: real segments are not subject to certification")


SEGMENT_SECONDS = 4.0


def segment_record(rec: EcgRecord, channel: int = 0,
                   seg_seconds: float = SEGMENT_SECONDS,
                   stride_seconds: float | None = None) -> list[Segment]:
    """Cut one channel into fixed windows; trailing partial window dropped."""
    seg_len = int(round(seg_seconds * rec.fs))
    stride = seg_len if stride_seconds is None else int(round(stride_seconds * rec.fs))
    if seg_len > rec.length:
        raise RecordTooShort(
            f"record {rec.id}: {rec.length} samples < one {seg_len}-sample window")
    x = rec.samples[channel]
    label = Label.PXAF if rec.label is Label.PXAF else Label.NORMAL
    out = []
    for start in range(0, rec.length - seg_len + 1, stride):
        out.append(Segment(
            id=f"{rec.id}@{start}",
            source=f"{rec.id}@{start}",
            samples=x[start: start + seg_len],
            fs=rec.fs,
            label=label,
            provenance=Provenance.REAL,
            cert_status=CertStatus.NOT_APPLICABLE,
        ))
    return out


# ------------------------------------------------------------------ file I/O


def _read_sidecar(path: Path) -> dict:
    sidecar = path.with_suffix(path.suffix + ".json")
    if not sidecar.exists():
        raise MissingSidecar(f"expected sidecar {sidecar}")
    return json.loads(sidecar.read_text())


def ingest_record(path: str | Path, format: str, *, record_id: str | None = None,
                  fs: int = 128, gain: float = 200.0,
                  label: Label = Label.UNLABELED) -> EcgRecord:
    """Load a record from disk; raw16 takes fs/gain/label from the sidecar."""
    path = Path(path)
    rid = record_id or path.stem
    if format == "csv":
        rows = []
        n_cols = None
        for line_no, line in enumerate(path.read_text().splitlines()):
            if not line.strip():
                continue
            cells = [c.strip() for c in line.replace(",", " ").split()]
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if line_no == 0:
                    continue  # header row
                raise
            if n_cols is None:
                n_cols = len(values)
            elif len(values) != n_cols:
                raise LengthMismatch(f"{path}: ragged row at line {line_no + 1}")
            rows.append(values)
        if not rows:
            raise LengthMismatch(f"{path}: no samples")
        samples = np.asarray(rows, dtype=np.float64).T
        return EcgRecord(id=rid, samples=samples, fs=fs, gain=gain, label=label)
    if format == "raw16":
        meta = _read_sidecar(path)
        raw = path.read_bytes()
        if len(raw) % 2:
            raise BadSampleWidth(f"{path}: odd payload of {len(raw)} bytes")
        flat = np.frombuffer(raw, dtype="<i2").astype(np.float64)
        n_channels = int(meta["n_channels"])
        length = int(meta["length"])
        if len(flat) != n_channels * length:
            raise LengthMismatch(
                f"{path}: {len(flat)} samples, sidecar says {n_channels}x{length}")
        g = float(meta["gain"])
        samples = flat.reshape(n_channels, length) / g
        return EcgRecord(id=rid, samples=samples, fs=int(meta["fs"]), gain=g,
                         label=Label(meta.get("label", "Unlabeled")))
    raise ValueError(f"unknown format {format!r}")


def write_raw16(rec: EcgRecord, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scaled = np.round(rec.samples * rec.gain)
    if np.max(np.abs(scaled)) > np.iinfo(np.int16).max:
        raise ValueError(f"record {rec.id}: samples exceed int16 range at gain {rec.gain}")
    path.write_bytes(np.ascontiguousarray(scaled.astype("<i2")).tobytes())
    sidecar = {"fs": rec.fs, "n_channels": rec.n_channels, "gain": rec.gain,
               "label": rec.label.value, "length": rec.length}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar))
    return path


def write_csv(rec: EcgRecord, path: str | Path, header: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if header:
        lines.append(",".join(f"ch{i}" for i in range(rec.n_channels)))
    for row in rec.samples.T:
        lines.append(",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path
