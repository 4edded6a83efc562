"""Unified landmark index: schemes, conversions, set matching, and metrics."""
from .matching import DEFAULT_COST_WEIGHTS, MatchResult, hungarian_match, match_cost_matrix
from .metrics import NORM_ALIASES, NORM_KINDS, failure_rate, nme, normalize_norm_kind
from .schemes import (
    UNIFIED_SIZE_DEFAULT,
    GroundTruthAnnotation,
    LandmarkScheme,
    UnifiedIndexMap,
    flip_annotation,
    from_unified,
    load_annotations,
    save_annotations,
    to_unified,
)

__all__ = [
    "DEFAULT_COST_WEIGHTS",
    "GroundTruthAnnotation",
    "LandmarkScheme",
    "MatchResult",
    "NORM_ALIASES",
    "NORM_KINDS",
    "UNIFIED_SIZE_DEFAULT",
    "UnifiedIndexMap",
    "failure_rate",
    "flip_annotation",
    "from_unified",
    "hungarian_match",
    "load_annotations",
    "match_cost_matrix",
    "nme",
    "normalize_norm_kind",
    "save_annotations",
    "to_unified",
]
