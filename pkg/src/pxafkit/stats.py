"""Statistical fidelity validation: RR/HR extraction, descriptive stats,
two-sample Kolmogorov-Smirnov test, Q-Q points, histograms, and the
population-level fidelity report comparing real against synthetic
segments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import PxafError
from .data.records import Segment
from .dsp.pipeline import PipelineConfig
from .dsp.rpeaks import detect_r_peaks


class TooFewPeaks(PxafError):
    pass


class TooFewValues(PxafError):
    pass


class EmptySample(PxafError):
    pass


class InsufficientPeaks(PxafError):
    pass


# ----------------------------------------------------------- RR / HR


def rr_intervals(peaks, fs: float) -> np.ndarray:
    """RR_i = (peak_{i+1} - peak_i) * 1000 / fs, in milliseconds."""
    peaks = np.asarray(peaks)
    if peaks.size < 2:
        raise TooFewPeaks(f"need >= 2 peaks for RR, got {peaks.size}")
    return np.diff(peaks) * 1000.0 / fs


def heart_rates(rr_ms) -> np.ndarray:
    """HR_i = 60000 / RR_i, in beats per minute."""
    rr_ms = np.asarray(rr_ms, dtype=np.float64)
    return 60000.0 / rr_ms


# ----------------------------------------------------------- descriptive


@dataclass
class PopulationStats:
    feature: str
    n: int
    mean: float
    std: float          # sample standard deviation (n-1 denominator)
    p2_5: float
    p97_5: float


def describe(values, feature: str = "") -> PopulationStats:
    """Mean, sample std, and 2.5/97.5 percentiles.

    Percentiles interpolate linearly between order statistics at rank
    (n-1)*q, zero-based.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise TooFewValues(f"need >= 2 values, got {values.size}")
    lo, hi = np.percentile(values, [2.5, 97.5], method="linear")
    return PopulationStats(feature=feature, n=int(values.size),
                           mean=float(values.mean()),
                           std=float(values.std(ddof=1)),
                           p2_5=float(lo), p97_5=float(hi))


# ----------------------------------------------------------- K-S test


@dataclass
class KsResult:
    statistic: float
    p_value: float
    n1: int
    n2: int


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """sup over observed points of |ECDF_a - ECDF_b|."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def kolmogorov_survival(lam: float, term_tol: float = 1e-12) -> float:
    """Q(lambda) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)."""
    if lam <= 1e-4:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 100000):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term < term_tol:
            break
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)


def ks_two_sample(a, b, method: str = "asymptotic") -> KsResult:
    """Two-sample K-S test.

    ``asymptotic`` evaluates the Kolmogorov distribution at
    lambda = (sqrt(n_e) + 0.12 + 0.11/sqrt(n_e)) * D with
    n_e = n1*n2/(n1+n2). ``exact`` enumerates every assignment of the
    pooled sample (only for n1+n2 <= 20).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    d = ks_statistic(a, b)
    n1, n2 = a.size, b.size
    if method == "exact":
        if n1 + n2 > 20:
            raise ValueError("exact method limited to n1+n2 <= 20")
        pooled = np.concatenate([a, b])
        total = 0
        hits = 0
        for combo in itertools.combinations(range(n1 + n2), n1):
            mask = np.zeros(n1 + n2, dtype=bool)
            mask[list(combo)] = True
            total += 1
            if ks_statistic(pooled[mask], pooled[~mask]) >= d - 1e-12:
                hits += 1
        p = hits / total
    elif method == "asymptotic":
        ne = math.sqrt(n1 * n2 / (n1 + n2))
        lam = (ne + 0.12 + 0.11 / ne) * d
        p = kolmogorov_survival(lam)
    else:
        raise ValueError(f"unknown method {method!r}")
    p = min(max(p, np.nextafter(0.0, 1.0)), 1.0)
    return KsResult(statistic=d, p_value=float(p), n1=n1, n2=n2)


# ----------------------------------------------------------- Q-Q / histogram


def qq_points(a, b, n_quantiles: int = 100) -> np.ndarray:
    """Matched quantiles of both samples at probabilities (i+0.5)/n."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    probs = 100.0 * (np.arange(n_quantiles) + 0.5) / n_quantiles
    qa = np.percentile(a, probs, method="linear")
    qb = np.percentile(b, probs, method="linear")
    return np.stack([qa, qb], axis=1)


def histogram(values, bins=30) -> tuple[np.ndarray, np.ndarray]:
    """Bin edges and counts; counts sum to n when the edges cover the data."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptySample("cannot histogram an empty sample")
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts


# ----------------------------------------------------------- fidelity report


def _pool_population(segments: list[Segment], fs: int,
                     cfg: PipelineConfig | None):
    rr_all: list[float] = []
    detectable = 0
    for seg in segments:
        peaks = detect_r_peaks(seg.samples, fs, cfg)
        if peaks.size >= 2:
            detectable += 1
            rr_all.extend(rr_intervals(peaks, fs))
    frac = detectable / len(segments) if segments else 0.0
    return np.asarray(rr_all), frac


def fidelity_report(real: list[Segment], synth: list[Segment], fs: int = 128,
                    cfg: PipelineConfig | None = None, seed: int = 0,
                    n_quantiles: int = 100, bins: int = 30) -> dict:
    """Population-level comparison of RR and HR distributions.

    The shuffled-baseline control rebuilds the real population with each
    segment's samples randomly permuted (destroying the waveform while
    keeping the amplitude distribution); a synthetic population worth
    keeping should sit closer to the real one than that control does.
    """
    if not real or not synth:
        raise EmptySample("both populations must be non-empty")
    rr_real, frac_real = _pool_population(real, fs, cfg)
    rr_synth, frac_synth = _pool_population(synth, fs, cfg)
    if frac_real < 0.5 or rr_real.size < 2:
        raise InsufficientPeaks(
            f"R-peaks detectable in only {frac_real:.0%} of real segments")
    if frac_synth < 0.5 or rr_synth.size < 2:
        raise InsufficientPeaks(
            f"R-peaks detectable in only {frac_synth:.0%} of synthetic segments")

    rng = np.random.default_rng(seed)
    control = [Segment(id=f"ctl-{s.id}", source=s.source,
                       samples=rng.permutation(s.samples), fs=s.fs, label=s.label,
                       provenance=s.provenance, cert_status=s.cert_status)
               for s in real]
    rr_control, _ = _pool_population(control, fs, cfg)

    report: dict = {"n_real_segments": len(real), "n_synth_segments": len(synth),
                    "detectable_fraction": {"real": frac_real, "synth": frac_synth},
                    "features": {}}
    for feature, xs_real, xs_synth, xs_control in (
            ("rr_ms", rr_real, rr_synth, rr_control),
            ("hr_bpm", heart_rates(rr_real), heart_rates(rr_synth),
             heart_rates(rr_control) if rr_control.size else np.array([]))):
        ks = ks_two_sample(xs_real, xs_synth)
        control_d = (ks_statistic(xs_real, xs_control)
                     if xs_control.size else 1.0)
        edges, _ = histogram(np.concatenate([xs_real, xs_synth]), bins)
        report["features"][feature] = {
            "real": asdict(describe(xs_real, feature)),
            "synth": asdict(describe(xs_synth, feature)),
            "ks": asdict(ks),
            "control_statistic": float(control_d),
            "synth_closer_than_control": bool(ks.statistic < control_d),
            "qq": qq_points(xs_real, xs_synth, n_quantiles).tolist(),
            "histogram": {
                "edges": edges.tolist(),
                "real_counts": np.histogram(xs_real, bins=edges)[0].tolist(),
                "synth_counts": np.histogram(xs_synth, bins=edges)[0].tolist(),
            },
        }
    report["synth_closer_than_control"] = all(
        f["synth_closer_than_control"] for f in report["features"].values())
    return report


def write_fidelity_outputs(report: dict, out_dir) -> list:
    """Emit report.json plus per-feature CSVs for external plotting."""
    import json
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "fidelity.json"]
    paths[0].write_text(json.dumps(report, indent=1, sort_keys=True))
    for feature, block in report["features"].items():
        qq_path = out_dir / f"qq_{feature}.csv"
        lines = ["q_real,q_synth"] + [f"{a!r},{b!r}" for a, b in block["qq"]]
        qq_path.write_text("\n".join(lines) + "\n")
        paths.append(qq_path)
        hist_path = out_dir / f"hist_{feature}.csv"
        h = block["histogram"]
        lines = ["bin_lo,bin_hi,real_count,synth_count"]
        for lo, hi, cr, cs in zip(h["edges"][:-1], h["edges"][1:],
                                  h["real_counts"], h["synth_counts"]):
            lines.append(f"{lo!r},{hi!r},{cr},{cs}")
        hist_path.write_text("\n".join(lines) + "\n")
        paths.append(hist_path)
    return paths
