from .wavelet import (
    LevelOutOfRange,
    TooManyLevels,
    WaveletDecomposition,
    dwt_decompose,
    dwt_inverse,
    max_dwt_levels,
    reconstruct_band_sum,
)
from .pipeline import (
    AllZeroSignal,
    EmptyInput,
    EnvelopeSeries,
    PipelineConfig,
    RecurrenceImage,
    TooShort,
    envelope,
    normalize_max_abs,
    preprocess_record,
    preprocess_segment,
    recurrence_image,
    shannon_energy,
)
from .rpeaks import detect_r_peaks
from .imageio import read_rimg, write_rimg

__all__ = [
    "WaveletDecomposition", "dwt_decompose", "dwt_inverse",
    "reconstruct_band_sum", "max_dwt_levels", "TooManyLevels", "LevelOutOfRange",
    "PipelineConfig", "EnvelopeSeries", "RecurrenceImage",
    "normalize_max_abs", "shannon_energy", "envelope", "recurrence_image",
    "preprocess_segment", "preprocess_record",
    "AllZeroSignal", "EmptyInput", "TooShort",
    "detect_r_peaks", "write_rimg", "read_rimg",
]
