"""Build augmented training manifests from certification decisions."""

from __future__ import annotations

from ..data.manifest import DatasetManifest, ManifestEntry, Split, SplitViolation
from ..data.records import CertStatus, Segment
from .store import DecisionStore, Verdict


def build_augmented_manifest(base: DatasetManifest, store: DecisionStore,
                             synthetic_segments: list[Segment],
                             include_uncertified: bool = False,
                             name: str | None = None) -> DatasetManifest:
    """Base training entries plus synthetic segments.

    Default keeps only segments whose effective decision is Certified
    (the curated variant); ``include_uncertified`` adds every synthetic
    segment regardless of decision (the uncurated ablation variant).
    """
    if base.split is not Split.TRAIN:
        raise SplitViolation(
            f"cannot augment a {base.split.value} split with synthetic data")
    effective = store.effective()
    entries = list(base.entries)
    for seg in synthetic_segments:
        decision = effective.get(seg.id)
        verdict = decision.verdict if decision else Verdict.PENDING
        if verdict is Verdict.CERTIFIED:
            status = CertStatus.CERTIFIED
        elif verdict is Verdict.REJECTED:
            status = CertStatus.REJECTED
        else:
            status = CertStatus.PENDING
        if include_uncertified or status is CertStatus.CERTIFIED:
            entries.append(ManifestEntry(seg.id, seg.label, seg.provenance, status))
    suffix = "gan" if include_uncertified else "cgan"
    return DatasetManifest(name=name or f"{base.name}-{suffix}",
                           split=Split.TRAIN, entries=entries)
