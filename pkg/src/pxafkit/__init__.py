"""Desk-scale PxAF detection pipeline.

Subpackages:
    data     -- ECG records, segmentation, fixture synthesis, dataset manifests
    dsp      -- wavelet / Shannon-energy / recurrence-image signal pipeline
    nn       -- minimal reverse-mode autodiff engine and layers
    gan      -- 1D U-Net GAN for synthetic PxAF segments
    certify  -- rule-based + human-in-the-loop certification of synthetic data
    stats    -- RR/HR descriptive statistics, K-S test, Q-Q, fidelity reports
    nas      -- differentiable cell search and network assembly
    classify -- classifier training, confusion metrics, ROC/AUC
"""

__version__ = "0.1.0"


class PxafError(Exception):
    """Base class for all domain errors raised by this package."""
