"""Certification tests: directive rules, decision store, HTTP service,
and augmented-manifest construction."""

import json
import urllib.error
import urllib.request

import numpy as np
import pytest

from pxafkit.certify import (
    AlreadyDecided,
    CertificationDecision,
    CertifyThresholds,
    DecisionStore,
    DirectiveReport,
    ReviewService,
    Source,
    Verdict,
    analyze_segment,
    auto_certify,
    build_augmented_manifest,
)
from pxafkit.certify.service import make_server
from pxafkit.certify.store import InvalidDecision
from pxafkit.data import (
    DatasetManifest,
    FixtureSpec,
    ManifestEntry,
    Segment,
    Split,
    SplitViolation,
    synthesize_fixture_ecg,
)
from pxafkit.data.fixtures import irregular_beat_times, regular_beat_times

FS = 128


def _pending_segment(samples, sid="s0") -> Segment:
    return Segment(id=sid, source="synthetic:test", samples=samples, fs=FS,
                   label="PxAF", provenance="Synthetic", cert_status="Pending")


def _clean_pxaf(seed) -> Segment:
    rng = np.random.default_rng(seed)
    beats = irregular_beat_times(4.5, FS, rng, hr_bpm=100)
    spec = FixtureSpec(beat_times=beats, p_wave_amplitudes=np.zeros(beats.size),
                       noise_std=0.02, fs=FS, duration=4.5)
    rec, _ = synthesize_fixture_ecg(spec, seed=seed)
    return _pending_segment(rec.samples[0][:512], f"clean-{seed}")


# ---------------------------------------------------------------- directives


def test_all_zero_segment_is_bizarre():
    report = analyze_segment(_pending_segment(np.zeros(512)))
    assert report.d1_bizarre
    assert report.d1_beat_count == 0


def test_noise_segment_is_bizarre():
    rng = np.random.default_rng(0)
    report = analyze_segment(_pending_segment(rng.normal(0, 0.3, 512)))
    assert report.d1_bizarre


def test_clean_irregular_fixtures_pass_all_directives():
    # thresholds were calibrated so clean fixtures pass at >= 90%
    passed = sum(1 for seed in range(50)
                 if not analyze_segment(_clean_pxaf(seed)).triggered())
    assert passed >= 45


def test_injected_spike_trips_directive_4():
    rng = np.random.default_rng(3)
    beats = list(regular_beat_times(4.5, FS, rng, hr_bpm=85))
    extra = np.round((beats[1] + 0.15) * FS) / FS
    all_beats = np.sort(np.asarray(beats + [extra]))
    r_amps = np.where(np.isclose(all_beats, extra), 0.8, 1.0)
    spec = FixtureSpec(beat_times=all_beats,
                       p_wave_amplitudes=np.zeros(all_beats.size),
                       noise_std=0.02, fs=FS, duration=4.5, r_amplitudes=r_amps)
    rec, _ = synthesize_fixture_ecg(spec, seed=3)
    report = analyze_segment(_pending_segment(rec.samples[0][:512]))
    assert report.d4_redundant_peaks
    assert abs(report.d4_min_rr_ms - 150.0) < 25.0


def test_alternating_qrs_polarity_trips_directive_3():
    rng = np.random.default_rng(4)
    beats = irregular_beat_times(4.5, FS, rng, hr_bpm=100)
    r_amps = np.where(np.arange(beats.size) % 2 == 0, 1.0, -0.9)
    spec = FixtureSpec(beat_times=beats, p_wave_amplitudes=np.zeros(beats.size),
                       noise_std=0.02, fs=FS, duration=4.5, r_amplitudes=r_amps)
    rec, _ = synthesize_fixture_ecg(spec, seed=4)
    report = analyze_segment(_pending_segment(rec.samples[0][:512]))
    assert report.d3_inconsistent_qrs
    assert report.d3_median_correlation < 0.6


def test_half_regular_half_irregular_trips_directive_5():
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        times = [0.15]
        while times[-1] < 2.0:
            times.append(times[-1] + 0.42 + rng.normal(0, 0.004))
        while times[-1] < 4.2:
            times.append(times[-1] + rng.uniform(0.28, 0.72))
        beats = np.round(np.asarray(times[:-1]) * FS) / FS
        spec = FixtureSpec(beat_times=beats,
                           p_wave_amplitudes=np.zeros(beats.size),
                           noise_std=0.02, fs=FS, duration=4.5)
        rec, _ = synthesize_fixture_ecg(spec, seed=seed)
        if analyze_segment(_pending_segment(rec.samples[0][:512])).d5_partial_pxaf:
            hits += 1
    assert hits >= 5  # calibrated catch rate is ~0.6 on this construction


def test_analyze_is_deterministic():
    seg = _clean_pxaf(7)
    r1 = analyze_segment(seg)
    r2 = analyze_segment(_pending_segment(seg.samples.copy(), seg.id))
    assert r1.to_dict() == r2.to_dict()


# ----------------------------------------------------------- auto certifier


def test_auto_certify_lowest_directive_wins():
    seg = _pending_segment(np.zeros(512))
    d4_only = DirectiveReport(d4_redundant_peaks=True, d4_min_rr_ms=150.0)
    d = auto_certify(seg, report=d4_only)
    assert d.verdict is Verdict.REJECTED and d.directive == 4
    d2_d5 = DirectiveReport(d2_distorted=True, d2_worst_window_score=0.1,
                            d5_partial_pxaf=True, d5_cv_ratio=9.0)
    d = auto_certify(seg, report=d2_d5)
    assert d.directive == 2
    clear = auto_certify(seg, report=DirectiveReport())
    assert clear.verdict is Verdict.CERTIFIED and clear.directive is None
    assert clear.source is Source.AUTO_RULE


def test_auto_certify_requires_pending():
    seg = Segment(id="done", source="synthetic:x", samples=np.zeros(512), fs=FS,
                  label="PxAF", provenance="Synthetic", cert_status="Certified")
    with pytest.raises(AlreadyDecided):
        auto_certify(seg)
    forced = auto_certify(seg, force=True, report=DirectiveReport())
    assert forced.verdict is Verdict.CERTIFIED


# ------------------------------------------------------------ decision store


def test_rejected_requires_directive():
    with pytest.raises(InvalidDecision):
        CertificationDecision(segment_id="a", verdict="Rejected")
    with pytest.raises(InvalidDecision):
        CertificationDecision(segment_id="a", verdict="Rejected", directive=9)
    with pytest.raises(InvalidDecision):
        CertificationDecision(segment_id="a", verdict="Certified", directive=2)


def test_store_replay_reconstructs_state(tmp_path):
    path = tmp_path / "decisions.jsonl"
    store = DecisionStore(path)
    store.append(CertificationDecision("s1", "Certified", source="AutoRule"))
    store.append(CertificationDecision("s2", "Rejected", directive=3,
                                       source="AutoRule"))
    store.append(CertificationDecision("s1", "Rejected", directive=1,
                                       source="Human", reviewer="dr"))
    replayed = DecisionStore(path)
    assert len(replayed.log) == 3
    eff1 = {k: d.to_json() for k, d in store.effective().items()}
    eff2 = {k: d.to_json() for k, d in replayed.effective().items()}
    assert eff1 == eff2


def test_human_overrides_auto_even_if_earlier(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    store.append(CertificationDecision("s1", "Rejected", directive=2,
                                       source="Human", reviewer="dr"))
    store.append(CertificationDecision("s1", "Certified", source="AutoRule"))
    assert store.effective()["s1"].source is Source.HUMAN
    assert store.status_of("s1") is Verdict.REJECTED


def test_latest_wins_within_human(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    store.append(CertificationDecision("s1", "Certified", source="Human"))
    store.append(CertificationDecision("s1", "Pending", source="Human"))
    assert store.status_of("s1") is Verdict.PENDING  # undo re-queued it


def test_pending_verdict_requires_human():
    with pytest.raises(InvalidDecision):
        CertificationDecision("s1", "Pending", source="AutoRule")


def test_nonce_dedupes_appends(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    d1 = store.append(CertificationDecision("s1", "Certified", source="Human",
                                            nonce="abc"))
    d2 = store.append(CertificationDecision("s1", "Certified", source="Human",
                                            nonce="abc"))
    assert len(store.log) == 1
    assert d1.seq == d2.seq


# ------------------------------------------------------------- HTTP service


@pytest.fixture()
def live_service(tmp_path):
    segments = {}
    for i in range(10):
        seg = _clean_pxaf(100 + i)
        seg.id = f"cand-{i:02d}"
        segments[seg.id] = seg
    store = DecisionStore(tmp_path / "decisions.jsonl")
    service = ReviewService(store, segments)
    server = make_server(service, port=0)
    import threading
    threading.Thread(target=server.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, store, segments
    server.shutdown()
    server.server_close()


def _get(url):
    try:
        with urllib.request.urlopen(url) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


def _post(url, payload):
    req = urllib.request.Request(url, data=json.dumps(payload).encode(),
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


def test_service_queue_and_decision_round_trip(live_service):
    base, store, segments = live_service
    code, body = _get(f"{base}/api/candidates?status=pending&limit=50")
    assert code == 200 and body["total"] == 10

    code, body = _post(f"{base}/api/candidates/cand-00/decision",
                       {"verdict": "Rejected", "directive": 4, "reviewer": "dr"})
    assert code == 200
    code, body = _get(f"{base}/api/candidates/cand-00")
    assert body["status"] == "Rejected"

    code, body = _get(f"{base}/api/candidates?status=pending&limit=50")
    assert body["total"] == 9

    code, body = _get(f"{base}/api/progress")
    assert body["rejected"] == 1 and body["pending"] == 9
    assert body["by_source"]["Human"] == 1


def test_service_candidate_detail_carries_analysis(live_service):
    base, _, segments = live_service
    code, body = _get(f"{base}/api/candidates/cand-03")
    assert code == 200
    assert len(body["samples"]) == 512
    assert "d1_bizarre" in body["report"]
    assert isinstance(body["r_peaks"], list) and len(body["r_peaks"]) >= 3


def test_service_rejected_without_directive_is_422(live_service):
    base, _, _ = live_service
    code, body = _post(f"{base}/api/candidates/cand-01/decision",
                       {"verdict": "Rejected", "reviewer": "dr"})
    assert code == 422


def test_service_unknown_segment_is_404(live_service):
    base, _, _ = live_service
    code, _ = _get(f"{base}/api/candidates/nope")
    assert code == 404
    code, _ = _post(f"{base}/api/candidates/nope/decision",
                    {"verdict": "Certified", "reviewer": "dr"})
    assert code == 404


def test_service_conflict_needs_force(live_service):
    base, _, _ = live_service
    url = f"{base}/api/candidates/cand-02/decision"
    assert _post(url, {"verdict": "Certified", "reviewer": "dr"})[0] == 200
    code, body = _post(url, {"verdict": "Rejected", "directive": 1,
                             "reviewer": "dr"})
    assert code == 409
    code, body = _post(url, {"verdict": "Rejected", "directive": 1,
                             "reviewer": "dr", "force": True})
    assert code == 200


def test_service_nonce_replay_is_idempotent(live_service):
    base, store, _ = live_service
    url = f"{base}/api/candidates/cand-04/decision"
    payload = {"verdict": "Certified", "reviewer": "dr", "nonce": "n-1"}
    code1, body1 = _post(url, payload)
    code2, body2 = _post(url, payload)
    assert code1 == code2 == 200
    assert body2["replayed"] is True
    assert body1["decision"]["seq"] == body2["decision"]["seq"]
    assert len(store.log) == 1


# ------------------------------------------------------- augmented manifests


def _base_manifest(n=3) -> DatasetManifest:
    entries = [ManifestEntry(f"real-{i}", "PxAF" if i % 2 else "Normal",
                             "Real", "NotApplicable") for i in range(n)]
    return DatasetManifest(name="toy-train", split=Split.TRAIN, entries=entries)


def _synthetic(n=4):
    return [_pending_segment(np.zeros(512), f"syn-{i}") for i in range(n)]


def test_augment_no_certified_returns_base(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    out = build_augmented_manifest(_base_manifest(), store, _synthetic())
    assert [e.segment_id for e in out.entries] == \
        [e.segment_id for e in _base_manifest().entries]


def test_augment_adds_certified_only(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    store.append(CertificationDecision("syn-0", "Certified", source="AutoRule"))
    store.append(CertificationDecision("syn-1", "Rejected", directive=1,
                                       source="AutoRule"))
    out = build_augmented_manifest(_base_manifest(), store, _synthetic())
    ids = [e.segment_id for e in out.entries]
    assert "syn-0" in ids and "syn-1" not in ids and "syn-2" not in ids


def test_augment_uncertified_variant_takes_all(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    store.append(CertificationDecision("syn-1", "Rejected", directive=1,
                                       source="AutoRule"))
    out = build_augmented_manifest(_base_manifest(), store, _synthetic(),
                                   include_uncertified=True)
    assert sum(1 for e in out.entries if e.segment_id.startswith("syn-")) == 4


def test_augment_human_override_wins(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    store.append(CertificationDecision("syn-0", "Certified", source="AutoRule"))
    store.append(CertificationDecision("syn-0", "Rejected", directive=2,
                                       source="Human", reviewer="dr"))
    out = build_augmented_manifest(_base_manifest(), store, _synthetic())
    assert "syn-0" not in [e.segment_id for e in out.entries]


def test_augment_test_split_rejected(tmp_path):
    store = DecisionStore(tmp_path / "d.jsonl")
    base = DatasetManifest(name="t", split=Split.TEST, entries=[
        ManifestEntry("real-0", "Normal", "Real", "NotApplicable")])
    with pytest.raises(SplitViolation):
        build_augmented_manifest(base, store, _synthetic())
