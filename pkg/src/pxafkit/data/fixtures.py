"""Parametric fixture-ECG synthesizer with exact ground-truth beats.

Each beat renders as Gaussian bumps: P wave, triphasic QRS, T wave.
The R bump is centered exactly on a sample, so annotated beat indices
are construction-exact and detector-free. PxAF-like fixtures use an
irregular RR series and attenuated or absent P bumps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import PxafError
from .records import CertStatus, EcgRecord, Label, Provenance, Segment, segment_record


class NonMonotonicBeats(PxafError):
    pass


@dataclass
class FixtureSpec:
    beat_times: np.ndarray                 # seconds, strictly increasing
    p_wave_amplitudes: np.ndarray          # one per beat, mV
    noise_std: float = 0.0
    fs: int = 128
    duration: float = 8.0
    r_amplitudes: np.ndarray | None = None  # defaults to 1.0 mV per beat


# bump centers (s, relative to R), amplitudes (mV), widths (s)
_P_OFFSET, _P_SIGMA = -0.16, 0.022
_QRS = ((-0.025, -0.15, 0.010), (0.0, 1.0, 0.012), (0.025, -0.20, 0.010))
_T_OFFSET, _T_AMP, _T_SIGMA = 0.22, 0.30, 0.05


def _add_bump(signal: np.ndarray, fs: int, center_s: float, amp: float, sigma: float):
    if amp == 0.0:
        return
    lo = max(0, int((center_s - 4 * sigma) * fs))
    hi = min(len(signal), int((center_s + 4 * sigma) * fs) + 1)
    if hi <= lo:
        return
    t = np.arange(lo, hi) / fs
    signal[lo:hi] += amp * np.exp(-0.5 * ((t - center_s) / sigma) ** 2)


def synthesize_fixture_ecg(spec: FixtureSpec, seed: int = 0,
                           record_id: str = "fixture",
                           label: Label = Label.UNLABELED) -> tuple[EcgRecord, np.ndarray]:
    """Render the fixture; returns the record and exact R-peak sample indices."""
    beats = np.asarray(spec.beat_times, dtype=np.float64)
    p_amps = np.asarray(spec.p_wave_amplitudes, dtype=np.float64)
    if beats.size != p_amps.size:
        raise ValueError("one P-wave amplitude per beat required")
    if beats.size and (np.any(np.diff(beats) <= 0)
                       or beats[0] < 0 or beats[-1] >= spec.duration):
        raise NonMonotonicBeats(
            "beat times must be strictly increasing within [0, duration)")
    r_amps = (np.ones_like(beats) if spec.r_amplitudes is None
              else np.asarray(spec.r_amplitudes, dtype=np.float64))
    n = int(round(spec.duration * spec.fs))
    x = np.zeros(n)
    annotations = np.round(beats * spec.fs).astype(int)
    for b_idx, r_amp, p_amp in zip(annotations, r_amps, p_amps):
        r_center = b_idx / spec.fs  # snap R to the sample grid
        _add_bump(x, spec.fs, r_center + _P_OFFSET, p_amp, _P_SIGMA)
        for off, amp, sigma in _QRS:
            _add_bump(x, spec.fs, r_center + off, amp * r_amp, sigma)
        _add_bump(x, spec.fs, r_center + _T_OFFSET, _T_AMP * r_amp, _T_SIGMA)
    rng = np.random.default_rng(seed)
    if spec.noise_std > 0:
        x = x + rng.normal(0.0, spec.noise_std, n)
    # second lead: attenuated copy with its own noise floor
    ch2 = 0.6 * x + rng.normal(0.0, max(spec.noise_std, 1e-4) * 0.5, n)
    rec = EcgRecord(id=record_id, samples=np.stack([x, ch2]), fs=spec.fs, label=label)
    annotations = annotations[annotations < n]
    return rec, annotations


def regular_beat_times(duration: float, fs: int, rng: np.random.Generator,
                       hr_bpm: float = 75.0, cv: float = 0.04) -> np.ndarray:
    """Sinus-like RR series snapped to the sample grid."""
    return _beat_series(duration, fs, rng, hr_bpm, cv)


def irregular_beat_times(duration: float, fs: int, rng: np.random.Generator,
                         hr_bpm: float = 95.0, cv: float = 0.28) -> np.ndarray:
    """Fibrillation-like RR series: high variability, same grid snapping."""
    return _beat_series(duration, fs, rng, hr_bpm, cv)


def _beat_series(duration, fs, rng, hr_bpm, cv):
    base_rr = 60.0 / hr_bpm
    times = [0.5 + rng.uniform(0, base_rr / 2)]
    while True:
        rr = base_rr * (1.0 + cv * rng.standard_normal())
        rr = max(rr, 0.30)
        nxt = times[-1] + rr
        if nxt >= duration - 0.4:
            break
        times.append(nxt)
    return np.round(np.asarray(times) * fs) / fs


def make_toy_record(kind: str, duration: float, fs: int, rng: np.random.Generator,
                    record_id: str, noise_std: float = 0.02) -> tuple[EcgRecord, np.ndarray]:
    """Two toy classes: regular RR with P-waves vs irregular RR with
    suppressed or absent P-waves."""
    if kind == "normal":
        beats = regular_beat_times(duration, fs, rng)
        p_amps = np.clip(rng.normal(0.15, 0.02, beats.size), 0.08, None)
        label = Label.NORMAL
    elif kind == "pxaf":
        beats = irregular_beat_times(duration, fs, rng)
        p_amps = np.where(rng.uniform(size=beats.size) < 0.7,
                          0.0, rng.uniform(0.0, 0.04, beats.size))
        label = Label.PXAF
    else:
        raise ValueError(f"unknown toy class {kind!r}")
    spec = FixtureSpec(beat_times=beats, p_wave_amplitudes=p_amps,
                       noise_std=noise_std, fs=fs, duration=duration)
    return synthesize_fixture_ecg(spec, seed=int(rng.integers(2 ** 31)),
                                  record_id=record_id, label=label)


def toy_segments(count: int, kind: str, fs: int = 128, seed: int = 0,
                 noise_std: float = 0.02, id_prefix: str | None = None) -> list[Segment]:
    """Convenience: ``count`` independent 4-second toy segments."""
    rng = np.random.default_rng(seed)
    prefix = id_prefix or f"toy-{kind}"
    out: list[Segment] = []
    batch = 0
    while len(out) < count:
        # one record yields several segments; keep drawing until filled
        duration = 4.0 * min(count - len(out), 16) + 2.0
        rec, _ = make_toy_record(kind, duration, fs, rng,
                                 record_id=f"{prefix}-{batch}", noise_std=noise_std)
        out.extend(segment_record(rec))
        batch += 1
    return out[:count]
