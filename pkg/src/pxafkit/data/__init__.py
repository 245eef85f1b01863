from .records import (
    BadSampleWidth,
    CertStatus,
    EcgRecord,
    Label,
    LengthMismatch,
    MissingSidecar,
    Provenance,
    RecordTooShort,
    Segment,
    ingest_record,
    segment_record,
    write_csv,
    write_raw16,
)
from .fixtures import (
    FixtureSpec,
    NonMonotonicBeats,
    irregular_beat_times,
    make_toy_record,
    regular_beat_times,
    synthesize_fixture_ecg,
    toy_segments,
)
from .manifest import (
    DatasetManifest,
    DuplicateId,
    ManifestEntry,
    Split,
    SplitViolation,
    UnknownSegment,
    load_segments,
    read_manifest,
    resolve_entries,
    save_segments,
    write_manifest,
)

__all__ = [
    "EcgRecord", "Segment", "Label", "Provenance", "CertStatus",
    "ingest_record", "segment_record", "write_raw16", "write_csv",
    "MissingSidecar", "LengthMismatch", "BadSampleWidth", "RecordTooShort",
    "FixtureSpec", "synthesize_fixture_ecg", "NonMonotonicBeats",
    "regular_beat_times", "irregular_beat_times", "make_toy_record", "toy_segments",
    "DatasetManifest", "ManifestEntry", "Split",
    "write_manifest", "read_manifest", "save_segments", "load_segments",
    "resolve_entries", "DuplicateId", "UnknownSegment", "SplitViolation",
]
