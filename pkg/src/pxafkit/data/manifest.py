"""Dataset manifests and the segment store.

A manifest is a JSON document naming a split and listing segment
entries (id, label, provenance, certification status) with per-class
counts. Entries are kept sorted by id; Test and Validation splits must
not contain synthetic segments.

Segments themselves live in an .npz store (id -> samples) with a JSON
metadata companion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .. import PxafError
from .records import CertStatus, Label, Provenance, Segment


class DuplicateId(PxafError):
    pass


class UnknownSegment(PxafError):
    pass


class SplitViolation(PxafError):
    pass


class Split(str, Enum):
    TRAIN = "Train"
    VALIDATION = "Validation"
    TEST = "Test"


@dataclass
class ManifestEntry:
    segment_id: str
    label: Label
    provenance: Provenance
    cert_status: CertStatus

    def __post_init__(self):
        self.label = Label(self.label)
        self.provenance = Provenance(self.provenance)
        self.cert_status = CertStatus(self.cert_status)


@dataclass
class DatasetManifest:
    name: str
    split: Split
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        self.split = Split(self.split)
        self.entries = sorted(self.entries, key=lambda e: e.segment_id)
        self.validate()

    def validate(self):
        seen = set()
        for e in self.entries:
            if e.segment_id in seen:
                raise DuplicateId(f"manifest {self.name}: duplicate id {e.segment_id}")
            seen.add(e.segment_id)
            if self.split is not Split.TRAIN and e.provenance is Provenance.SYNTHETIC:
                raise SplitViolation(
                    f"manifest {self.name}: synthetic segment {e.segment_id} "
                    f"in {self.split.value} split")

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            out[e.label.value] = out.get(e.label.value, 0) + 1
        return out

    @staticmethod
    def from_segments(name: str, split: Split, segments: list[Segment]) -> "DatasetManifest":
        return DatasetManifest(name=name, split=split, entries=[
            ManifestEntry(s.id, s.label, s.provenance, s.cert_status)
            for s in segments])


def write_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "name": manifest.name,
        "split": manifest.split.value,
        "counts": manifest.counts,
        "entries": [
            {"segment_id": e.segment_id, "label": e.label.value,
             "provenance": e.provenance.value, "cert_status": e.cert_status.value}
            for e in manifest.entries
        ],
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path


def read_manifest(path: str | Path) -> DatasetManifest:
    doc = json.loads(Path(path).read_text())
    manifest = DatasetManifest(
        name=doc["name"], split=Split(doc["split"]),
        entries=[ManifestEntry(d["segment_id"], d["label"], d["provenance"],
                               d["cert_status"]) for d in doc["entries"]])
    if doc.get("counts") and doc["counts"] != manifest.counts:
        raise PxafError(f"manifest {path}: stored counts disagree with entries")
    return manifest


# ------------------------------------------------------------- segment store


def _store_path(path: str | Path) -> Path:
    path = Path(path)
    return path if path.suffix == ".npz" else path.with_suffix(path.suffix + ".npz")


def save_segments(segments: list[Segment], path: str | Path) -> Path:
    path = _store_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ids = [s.id for s in segments]
    if len(set(ids)) != len(ids):
        raise DuplicateId("segment store: duplicate segment ids")
    np.savez(path, **{s.id: s.samples for s in segments})
    meta = {s.id: {"source": s.source, "fs": s.fs, "label": s.label.value,
                   "provenance": s.provenance.value,
                   "cert_status": s.cert_status.value}
            for s in segments}
    path.with_suffix(".meta.json").write_text(json.dumps(meta, sort_keys=True))
    return path


def load_segments(path: str | Path) -> dict[str, Segment]:
    path = _store_path(path)
    arrays = np.load(path)
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    out = {}
    for sid in arrays.files:
        m = meta[sid]
        out[sid] = Segment(id=sid, source=m["source"], samples=arrays[sid],
                           fs=m["fs"], label=m["label"], provenance=m["provenance"],
                           cert_status=m["cert_status"])
    return out


def resolve_entries(manifest: DatasetManifest,
                    store: dict[str, Segment]) -> list[Segment]:
    """Map manifest entries to stored segments, applying the manifest's
    certification status (the manifest is authoritative)."""
    out = []
    for e in manifest.entries:
        if e.segment_id not in store:
            raise UnknownSegment(f"segment {e.segment_id} not in store")
        s = store[e.segment_id]
        out.append(Segment(id=s.id, source=s.source, samples=s.samples, fs=s.fs,
                           label=e.label, provenance=e.provenance,
                           cert_status=e.cert_status))
    return out
