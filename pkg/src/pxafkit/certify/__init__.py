from .rules import (
    CertifyThresholds,
    DirectiveReport,
    AlreadyDecided,
    analyze_segment,
    auto_certify,
)
from .store import (
    CertificationDecision,
    DecisionStore,
    Source,
    Verdict,
)
from .service import ReviewService, run_review_service
from .augment import build_augmented_manifest

__all__ = [
    "CertifyThresholds", "DirectiveReport", "analyze_segment", "auto_certify",
    "AlreadyDecided", "CertificationDecision", "DecisionStore", "Source",
    "Verdict", "ReviewService", "run_review_service", "build_augmented_manifest",
]
