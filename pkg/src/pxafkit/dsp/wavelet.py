"""Periodized orthogonal discrete wavelet transform (Daubechies 3).

Analysis correlates the circularly-extended signal with the low/high
pass pair and downsamples by two per level; synthesis is the exact
transpose, so reconstruction is perfect and energy is preserved for
even-length inputs. Odd intermediate lengths are handled by repeating
the last sample before filtering and trimming after inverse filtering,
which keeps the round trip exact at the cost of strict orthogonality
at those levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import PxafError


class TooManyLevels(PxafError):
    pass


class LevelOutOfRange(PxafError):
    pass


# Daubechies-3 low-pass filter, Newton-refined so the defining identities
# (sum h = sqrt(2), double-shift orthonormality, three vanishing moments
# of the quadrature-mirror high-pass) hold to float64 precision. The test
# suite asserts all of them.
DB3_LO = np.array([
    0.03522629188570957,
    -0.08544127388202666,
    -0.13501102001025478,
    0.45987750211849143,
    0.8068915093110927,
    0.332670552950083,
])
DB3_HI = (DB3_LO[::-1] * np.array([1.0, -1.0] * 3)).copy()

_FILTERS = {"db3": (DB3_LO, DB3_HI)}


def max_dwt_levels(n: int) -> int:
    """Deepest periodized level for a length-n signal: floor(log2 n)."""
    if n < 2:
        return 0
    return int(np.floor(np.log2(n)))


@dataclass
class WaveletDecomposition:
    levels: int
    details: list[np.ndarray]        # d_1 .. d_L
    approximation: np.ndarray        # a_L
    boundary: str = "periodic"
    wavelet: str = "db3"
    # length of the signal entering each analysis level, for exact inverse
    input_lengths: list[int] = field(default_factory=list)

    def coefficient_energy(self) -> float:
        return float(sum((d ** 2).sum() for d in self.details)
                     + (self.approximation ** 2).sum())


def _analysis_step(x: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    n = len(x)
    if n % 2:
        x = np.concatenate([x, x[-1:]])
        n += 1
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(len(lo))[None, :]) % n
    win = x[idx]
    return win @ lo, win @ hi


def _synthesis_step(ca: np.ndarray, cd: np.ndarray, lo: np.ndarray,
                    hi: np.ndarray, out_len: int) -> np.ndarray:
    n = 2 * len(ca)
    idx = (2 * np.arange(len(ca))[:, None] + np.arange(len(lo))[None, :]) % n
    x = np.zeros(n)
    np.add.at(x, idx, ca[:, None] * lo[None, :] + cd[:, None] * hi[None, :])
    return x[:out_len]


def dwt_decompose(x, wavelet: str = "db3", levels: int = 9) -> WaveletDecomposition:
    """Multi-level periodized DWT.

    Requires len(x) >= 2**levels and levels >= 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if levels < 1:
        raise LevelOutOfRange(f"levels must be >= 1, got {levels}")
    if len(x) < 2 ** levels:
        raise TooManyLevels(
            f"signal of length {len(x)} supports at most {max_dwt_levels(len(x))} "
            f"levels, requested {levels}")
    lo, hi = _FILTERS[wavelet]
    details = []
    lengths = []
    approx = x
    for _ in range(levels):
        lengths.append(len(approx))
        approx, d = _analysis_step(approx, lo, hi)
        details.append(d)
    return WaveletDecomposition(levels=levels, details=details, approximation=approx,
                                wavelet=wavelet, input_lengths=lengths)


def dwt_inverse(dec: WaveletDecomposition) -> np.ndarray:
    lo, hi = _FILTERS[dec.wavelet]
    x = dec.approximation
    for level in range(dec.levels, 0, -1):
        x = _synthesis_step(x, dec.details[level - 1], lo, hi,
                            dec.input_lengths[level - 1])
    return x


def reconstruct_band_sum(dec: WaveletDecomposition, detail_levels=(2, 3, 4),
                         use_approximation: bool = True) -> np.ndarray:
    """Sum of single-branch reconstructions of the selected components.

    Equivalent (by linearity of the inverse transform) to inverting the
    decomposition with every unselected band zeroed.
    """
    detail_levels = set(detail_levels)
    bad = [k for k in detail_levels if not 1 <= k <= dec.levels]
    if bad:
        raise LevelOutOfRange(f"detail levels {sorted(bad)} outside 1..{dec.levels}")
    kept = WaveletDecomposition(
        levels=dec.levels,
        details=[d if (i + 1) in detail_levels else np.zeros_like(d)
                 for i, d in enumerate(dec.details)],
        approximation=(dec.approximation if use_approximation
                       else np.zeros_like(dec.approximation)),
        wavelet=dec.wavelet,
        input_lengths=dec.input_lengths,
    )
    return dwt_inverse(kept)
