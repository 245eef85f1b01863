"""Automated rejection directives for synthetic segments.

Five rules, checked in order of severity:

  1 bizarre shape        -- too few detectable beats, or envelope SNR so
                            low that no wave structure stands out
  2 distorted stretch    -- some 1 s window where no beat resembles the
                            segment's own median beat template
  3 inconsistent QRS     -- aligned +/-60 ms QRS windows disagree with
                            each other (low median pairwise correlation)
  4 redundant/noisy peaks-- an RR interval below 250 ms, or a peak whose
                            amplitude is a robust-z outlier
  5 partial arrhythmia   -- RR variability differs wildly between the
                            two segment halves

Thresholds were calibrated on labeled fixture segments (see
scripts/calibrate_certify.py); the defaults below are the frozen result
of that run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import PxafError
from ..data.records import CertStatus, Segment
from ..dsp.pipeline import PipelineConfig, band_signal, shannon_energy
from ..dsp.rpeaks import DETECTION_LEVELS, detect_r_peaks
from .store import CertificationDecision, Source, Verdict


class AlreadyDecided(PxafError):
    pass


@dataclass
class CertifyThresholds:
    min_peaks: int = 3            # D1: fewer detected beats is bizarre
    min_envelope_snr: float = 4.0  # D1: p98/median of the detection envelope
    tau2: float = 0.65            # D2: worst 1 s window template correlation
    tau3: float = 0.60            # D3: median pairwise QRS correlation
    min_rr_ms: float = 250.0      # D4: physiological refractory floor
    tau4: float = 6.0             # D4: robust peak-amplitude z-score
    tau5: float = 3.5             # D5: RR coefficient-of-variation half ratio
    cv_floor: float = 0.05        # D5: variability floor for the ratio
    min_rr_per_half: int = 3      # D5: evidence floor per segment half


@dataclass
class DirectiveReport:
    d1_bizarre: bool = False
    d1_beat_count: int = 0
    d1_envelope_snr: float = 0.0
    d2_distorted: bool = False
    d2_worst_window_score: float = 1.0
    d3_inconsistent_qrs: bool = False
    d3_median_correlation: float = 1.0
    d4_redundant_peaks: bool = False
    d4_min_rr_ms: float = float("inf")
    d4_max_amplitude_z: float = 0.0
    d5_partial_pxaf: bool = False
    d5_cv_ratio: float = 1.0

    def triggered(self) -> list[int]:
        flags = [self.d1_bizarre, self.d2_distorted, self.d3_inconsistent_qrs,
                 self.d4_redundant_peaks, self.d5_partial_pxaf]
        return [i + 1 for i, f in enumerate(flags) if f]

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, (bool, np.bool_)):
                out[k] = bool(v)
            elif isinstance(v, (int, np.integer)):
                out[k] = int(v)
            else:
                v = float(v)
                out[k] = v if np.isfinite(v) else None
        return out


def _detection_envelope(x: np.ndarray, fs: int) -> np.ndarray | None:
    cfg = PipelineConfig(detail_levels=DETECTION_LEVELS)
    band = band_signal(x, fs, cfg, use_approximation=False)
    peak = np.max(np.abs(band))
    if peak <= 1e-10 * max(1.0, float(np.max(np.abs(x)))):
        return None
    env = -shannon_energy(band / peak)
    w = max(1, int(round(0.1 * fs)))
    return np.convolve(env, np.ones(w) / w, mode="same")


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa < 1e-12 or sb < 1e-12:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def analyze_segment(seg: Segment, thresholds: CertifyThresholds | None = None) -> DirectiveReport:
    """Deterministic directive report for one 512-sample segment."""
    th = thresholds or CertifyThresholds()
    x = np.asarray(seg.samples, dtype=np.float64)
    fs = seg.fs
    report = DirectiveReport()

    peaks = detect_r_peaks(x, fs)
    env = _detection_envelope(x, fs)
    report.d1_beat_count = int(peaks.size)
    if env is None:
        report.d1_bizarre = True
        return report
    snr = float(np.percentile(env, 98) / max(np.median(env), 1e-12))
    report.d1_envelope_snr = snr
    if peaks.size < th.min_peaks or snr < th.min_envelope_snr:
        report.d1_bizarre = True

    band = band_signal(x, fs, PipelineConfig(detail_levels=DETECTION_LEVELS),
                       use_approximation=False)

    # beat windows around each full-window peak
    half = int(round(0.25 * fs))
    beat_windows = [x[p - half: p + half] for p in peaks
                    if p - half >= 0 and p + half <= len(x)]
    if len(beat_windows) >= 2:
        stack = np.stack(beat_windows)
        template = np.median(stack, axis=0)
        corrs = np.array([_pearson(w, template) for w in stack])
        covered_peaks = [p for p in peaks if p - half >= 0 and p + half <= len(x)]

        # D2: worst 1 s window; a beat covers a window if their spans overlap
        win = int(fs)
        worst = 1.0
        for start in range(0, len(x) - win + 1, win // 4):
            stop = start + win
            scores = [c for p, c in zip(covered_peaks, corrs)
                      if p + half > start and p - half < stop]
            worst = min(worst, max(scores) if scores else 0.0)
        report.d2_worst_window_score = float(worst)
        report.d2_distorted = worst < th.tau2

    # D3: aligned +/-60 ms QRS windows
    qhalf = int(round(0.06 * fs))
    qrs = [x[p - qhalf: p + qhalf + 1] for p in peaks
           if p - qhalf >= 0 and p + qhalf + 1 <= len(x)]
    if len(qrs) >= 2:
        pair_corrs = [_pearson(qrs[i], qrs[j])
                      for i in range(len(qrs)) for j in range(i + 1, len(qrs))]
        med = float(np.median(pair_corrs))
        report.d3_median_correlation = med
        report.d3_inconsistent_qrs = med < th.tau3

    # D4: refractory violations and amplitude outliers. The scan reruns
    # with a 100 ms refractory so that extra peaks inside the normal
    # 200 ms suppression window become visible as short RR intervals.
    close_peaks = detect_r_peaks(x, fs, refractory_seconds=0.1)
    if close_peaks.size >= 2:
        rr = np.diff(close_peaks) * 1000.0 / fs
        report.d4_min_rr_ms = float(rr.min())
        amps = band[close_peaks]
        med_amp = np.median(amps)
        mad = np.median(np.abs(amps - med_amp))
        z = np.abs(amps - med_amp) / (1.4826 * mad + 0.05 * abs(med_amp) + 1e-9)
        report.d4_max_amplitude_z = float(z.max())
        report.d4_redundant_peaks = bool(rr.min() < th.min_rr_ms
                                         or z.max() > th.tau4)

    # D5: RR variability split between segment halves
    if peaks.size >= 2:
        rr = np.diff(peaks) * 1000.0 / fs
        mid = len(x) / 2
        first = rr[peaks[:-1] < mid]
        second = rr[peaks[:-1] >= mid]
        if first.size >= th.min_rr_per_half and second.size >= th.min_rr_per_half:
            cv1 = first.std() / max(first.mean(), 1e-9)
            cv2 = second.std() / max(second.mean(), 1e-9)
            ratio = (max(cv1, cv2, th.cv_floor)
                     / max(min(cv1, cv2), th.cv_floor))
            report.d5_cv_ratio = float(ratio)
            report.d5_partial_pxaf = ratio > th.tau5

    return report


def auto_certify(seg: Segment, thresholds: CertifyThresholds | None = None,
                 reviewer: str = "auto-rule-engine", force: bool = False,
                 report: DirectiveReport | None = None) -> CertificationDecision:
    """Reject with the lowest-numbered triggered directive, else certify."""
    if seg.cert_status is not CertStatus.PENDING and not force:
        raise AlreadyDecided(f"segment {seg.id} is {seg.cert_status.value}")
    if report is None:
        report = analyze_segment(seg, thresholds)
    triggered = report.triggered()
    if triggered:
        return CertificationDecision(
            segment_id=seg.id, verdict=Verdict.REJECTED, directive=triggered[0],
            source=Source.AUTO_RULE, reviewer=reviewer,
            notes=f"triggered directives: {triggered}")
    return CertificationDecision(
        segment_id=seg.id, verdict=Verdict.CERTIFIED, directive=None,
        source=Source.AUTO_RULE, reviewer=reviewer, notes="")
