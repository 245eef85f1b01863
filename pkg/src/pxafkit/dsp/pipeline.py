"""Signal pipeline: band reconstruction, normalization, Shannon energy,
envelope, recurrence image.

A 512-sample segment at 128 Hz flows through
dwt -> band sum -> max-abs normalize -> Shannon energy -> 100 ms
envelope (13 samples -> 39 points) -> 39x39 recurrence image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import PxafError
from .wavelet import dwt_decompose, max_dwt_levels, reconstruct_band_sum


class AllZeroSignal(PxafError):
    pass


class EmptyInput(PxafError):
    pass


class TooShort(PxafError):
    pass


@dataclass
class PipelineConfig:
    wavelet: str = "db3"
    wavelet_levels: int = 10            # capped at floor(log2 n) per input
    detail_levels: tuple = (2, 3, 4)
    use_approximation: bool = True
    shannon_window_seconds: float = 0.1
    recurrence_seconds: float = 4.0
    recurrence_thresholded: bool = False
    recurrence_epsilon: float = 0.1     # only used by the thresholded variant
    zero_clamp: float = 1e-12           # |u| below this counts as silence


@dataclass
class EnvelopeSeries:
    values: np.ndarray
    window_samples: int
    fs_effective: float


@dataclass
class RecurrenceImage:
    matrix: np.ndarray                  # (n, n) float32 in [0, 1]
    n: int
    window_seconds: float = 4.0
    segment_id: str = ""


def normalize_max_abs(x) -> np.ndarray:
    """Scale so the largest magnitude is exactly 1."""
    x = np.asarray(x, dtype=np.float64)
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0.0:
        raise AllZeroSignal("cannot normalize an all-zero signal")
    return x / peak


def shannon_energy(u, zero_clamp: float = 1e-12) -> np.ndarray:
    """y = u^2 * ln(u^2), with the exact limit value 0 at u == 0.

    Nonpositive everywhere on |u| <= 1 and even in u.
    """
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    mask = np.abs(u) > zero_clamp
    sq = u[mask] ** 2
    out[mask] = sq * np.log(sq)
    return out


def envelope(y, fs: float, window_seconds: float = 0.1) -> EnvelopeSeries:
    """Mean over non-overlapping windows; trailing partial window dropped."""
    y = np.asarray(y, dtype=np.float64)
    w = int(round(window_seconds * fs))
    if w < 1:
        raise EmptyInput(f"window of {window_seconds}s at fs={fs} is empty")
    n = len(y) // w
    if n < 1:
        raise EmptyInput(f"input of length {len(y)} shorter than one {w}-sample window")
    values = y[: n * w].reshape(n, w).mean(axis=1)
    return EnvelopeSeries(values=values, window_samples=w, fs_effective=fs / w)


def recurrence_image(e: EnvelopeSeries | np.ndarray, window_seconds: float = 4.0,
                     thresholded: bool = False, epsilon: float = 0.1,
                     segment_id: str = "") -> RecurrenceImage:
    """Pairwise |e_i - e_j| distance matrix scaled into [0, 1].

    The all-equal input degenerates to the zero matrix. The thresholded
    variant marks pairs closer than ``epsilon`` (after scaling) with 1.
    """
    values = e.values if isinstance(e, EnvelopeSeries) else np.asarray(e, dtype=np.float64)
    if len(values) < 2:
        raise TooShort(f"need at least 2 envelope points, got {len(values)}")
    m = np.abs(values[:, None] - values[None, :])
    peak = m.max()
    if peak > 0:
        m = m / peak
    if thresholded:
        m = (m <= epsilon).astype(np.float64)
        np.fill_diagonal(m, 0.0)
    m = np.triu(m, 1)
    m = m + m.T  # bitwise symmetry by construction, zero diagonal
    return RecurrenceImage(matrix=m.astype(np.float32), n=len(values),
                           window_seconds=window_seconds, segment_id=segment_id)


def band_signal(x, fs: float, cfg: PipelineConfig | None = None,
                use_approximation: bool | None = None) -> np.ndarray:
    """Wavelet band-sum denoising stage shared by the pipeline and the
    R-peak detector. Levels are capped at floor(log2 n)."""
    cfg = cfg or PipelineConfig()
    x = np.asarray(x, dtype=np.float64)
    eff_levels = min(cfg.wavelet_levels, max_dwt_levels(len(x)))
    if eff_levels < 1:
        raise TooShort(f"input of length {len(x)} too short for the wavelet stage")
    dec = dwt_decompose(x, cfg.wavelet, eff_levels)
    keep = tuple(k for k in cfg.detail_levels if k <= eff_levels)
    approx = cfg.use_approximation if use_approximation is None else use_approximation
    return reconstruct_band_sum(dec, keep, approx)


def preprocess_segment(samples, fs: float, cfg: PipelineConfig | None = None,
                       segment_id: str = "") -> RecurrenceImage:
    """Full pipeline for one fixed-length window."""
    cfg = cfg or PipelineConfig()
    band = band_signal(samples, fs, cfg)
    u = normalize_max_abs(band)
    y = shannon_energy(u, cfg.zero_clamp)
    env = envelope(y, fs, cfg.shannon_window_seconds)
    return recurrence_image(env, cfg.recurrence_seconds, cfg.recurrence_thresholded,
                            cfg.recurrence_epsilon, segment_id=segment_id)


def preprocess_record(channel, fs: float, cfg: PipelineConfig | None = None,
                      record_id: str = "") -> list[RecurrenceImage]:
    """Record-level variant: one wavelet/normalize pass over the whole
    channel, then the envelope is cut into recurrence windows."""
    cfg = cfg or PipelineConfig()
    band = band_signal(channel, fs, cfg)
    u = normalize_max_abs(band)
    y = shannon_energy(u, cfg.zero_clamp)
    env = envelope(y, fs, cfg.shannon_window_seconds)
    pts = int(cfg.recurrence_seconds * fs) // env.window_samples
    images = []
    for k in range(len(env.values) // pts):
        window = env.values[k * pts: (k + 1) * pts]
        images.append(recurrence_image(
            window, cfg.recurrence_seconds, cfg.recurrence_thresholded,
            cfg.recurrence_epsilon, segment_id=f"{record_id}:{k}"))
    return images
