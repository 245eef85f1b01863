#!/usr/bin/env python3
"""Calibrate the automated certification thresholds on labeled fixtures.

Generates clean fixture segments (which must pass every directive) and
defect fixtures constructed to violate one directive each, prints the
evidence distributions, and reports pass/trip rates for the thresholds
currently frozen in pxafkit.certify.rules.CertifyThresholds.

Run from the repository root:  python scripts/calibrate_certify.py
"""

import numpy as np

from pxafkit.certify.rules import CertifyThresholds, analyze_segment
from pxafkit.data import FixtureSpec, Segment, synthesize_fixture_ecg
from pxafkit.data.fixtures import irregular_beat_times, regular_beat_times

FS = 128


def _segment_from(spec: FixtureSpec, seed: int, sid: str) -> Segment:
    rec, _ = synthesize_fixture_ecg(spec, seed=seed, record_id=sid)
    return Segment(id=sid, source=f"synthetic:cal", samples=rec.samples[0][:512],
                   fs=FS, label="PxAF", provenance="Synthetic",
                   cert_status="Pending")


def clean_pxaf(seed: int) -> Segment:
    rng = np.random.default_rng(seed)
    beats = irregular_beat_times(4.5, FS, rng, hr_bpm=100)
    spec = FixtureSpec(beat_times=beats, p_wave_amplitudes=np.zeros(beats.size),
                       noise_std=0.02, fs=FS, duration=4.5)
    return _segment_from(spec, seed, f"clean-{seed}")


def clean_normal(seed: int) -> Segment:
    rng = np.random.default_rng(seed)
    beats = regular_beat_times(4.5, FS, rng, hr_bpm=80)
    spec = FixtureSpec(beat_times=beats,
                       p_wave_amplitudes=np.full(beats.size, 0.15),
                       noise_std=0.02, fs=FS, duration=4.5)
    return _segment_from(spec, seed, f"cleanN-{seed}")


def defect_d1(seed: int) -> Segment:
    rng = np.random.default_rng(seed)
    return Segment(id=f"d1-{seed}", source="synthetic:cal",
                   samples=rng.normal(0, 0.3, 512), fs=FS, label="PxAF",
                   provenance="Synthetic", cert_status="Pending")


def defect_d2(seed: int) -> Segment:
    seg = clean_pxaf(seed)
    rng = np.random.default_rng(seed + 1)
    x = seg.samples.copy()
    start, span = 120, int(1.5 * FS)  # garble 1.5 s so a full window is junk
    x[start:start + span] = 0.8 * np.sin(np.linspace(0, 60, span)) \
        + rng.normal(0, 0.3, span)
    seg.samples = x
    return seg


def defect_d3(seed: int) -> Segment:
    rng = np.random.default_rng(seed)
    beats = irregular_beat_times(4.5, FS, rng, hr_bpm=100)
    r_amps = np.where(np.arange(beats.size) % 2 == 0, 1.0, -0.9)
    spec = FixtureSpec(beat_times=beats, p_wave_amplitudes=np.zeros(beats.size),
                       noise_std=0.02, fs=FS, duration=4.5, r_amplitudes=r_amps)
    return _segment_from(spec, seed, f"d3-{seed}")


def defect_d4(seed: int) -> Segment:
    rng = np.random.default_rng(seed)
    beats = list(regular_beat_times(4.5, FS, rng, hr_bpm=85))
    extra = np.round((beats[1] + 0.15) * FS) / FS  # spike 150 ms after beat 1
    all_beats = np.sort(np.asarray(beats + [extra]))
    r_amps = np.where(np.isclose(all_beats, extra), 0.8, 1.0)
    spec = FixtureSpec(beat_times=all_beats,
                       p_wave_amplitudes=np.zeros(all_beats.size),
                       noise_std=0.02, fs=FS, duration=4.5, r_amplitudes=r_amps)
    return _segment_from(spec, seed, f"d4-{seed}")


def defect_d5(seed: int) -> Segment:
    # explicit RR series: locked first half, fibrillatory second half
    rng = np.random.default_rng(seed)
    times = [0.15]
    while times[-1] < 2.0:
        times.append(times[-1] + 0.42 + rng.normal(0, 0.004))
    while times[-1] < 4.2:
        times.append(times[-1] + rng.uniform(0.28, 0.72))
    beats = np.round(np.asarray(times[:-1]) * FS) / FS
    spec = FixtureSpec(beat_times=beats, p_wave_amplitudes=np.zeros(beats.size),
                       noise_std=0.02, fs=FS, duration=4.5)
    return _segment_from(spec, seed, f"d5-{seed}")


def main():
    th = CertifyThresholds()
    print(f"thresholds: {th}")
    groups = {
        "clean-pxaf": ([clean_pxaf(s) for s in range(100)], None),
        "clean-normal": ([clean_normal(s) for s in range(100)], None),
        "d1-noise": ([defect_d1(s) for s in range(50)], 1),
        "d2-distorted": ([defect_d2(s) for s in range(50)], 2),
        "d3-qrs": ([defect_d3(s) for s in range(50)], 3),
        "d4-spike": ([defect_d4(s) for s in range(50)], 4),
        "d5-partial": ([defect_d5(s) for s in range(50)], 5),
    }
    for name, (segs, want) in groups.items():
        reports = [analyze_segment(s, th) for s in segs]
        trig = [r.triggered() for r in reports]
        if want is None:
            ok = sum(1 for t in trig if not t)
            print(f"{name:14s} pass-all rate {ok / len(segs):5.2f}   "
                  f"flag counts: {_counts(trig)}")
            print(f"               snr p5 {np.percentile([r.d1_envelope_snr for r in reports], 5):.2f}  "
                  f"d2 p5 {np.percentile([r.d2_worst_window_score for r in reports], 5):.2f}  "
                  f"d3 p5 {np.percentile([r.d3_median_correlation for r in reports], 5):.2f}  "
                  f"d4z p95 {np.percentile([r.d4_max_amplitude_z for r in reports], 95):.2f}  "
                  f"d5 p95 {np.percentile([r.d5_cv_ratio for r in reports], 95):.2f}")
        else:
            hit = sum(1 for t in trig if want in t)
            lowest = sum(1 for t in trig if t and min(t) == want)
            print(f"{name:14s} target-hit rate {hit / len(segs):5.2f}   "
                  f"lowest-is-target {lowest / len(segs):5.2f}   flags {_counts(trig)}")


def _counts(trig):
    out = {}
    for t in trig:
        for d in t:
            out[d] = out.get(d, 0) + 1
    return dict(sorted(out.items()))


if __name__ == "__main__":
    main()
