"""Landmark accuracy metrics: normalized mean error and failure rate."""
from __future__ import annotations

import numpy as np

from ..errors import (
    ConfigurationError,
    DegenerateNormalizerError,
    ShapeError,
    UndefinedStatisticError,
)

NORM_KINDS = ("inter_ocular", "inter_pupil", "box")
# CLI shorthand is io/ip/box.
NORM_ALIASES = {"io": "inter_ocular", "ip": "inter_pupil", "box": "box"}


def normalize_norm_kind(kind: str) -> str:
    kind = NORM_ALIASES.get(kind, kind)
    if kind not in NORM_KINDS:
        raise ConfigurationError(
            f"unknown normalizer kind {kind!r}; expected one of {NORM_KINDS}"
        )
    return kind


def nme(pred: np.ndarray, gt: np.ndarray, norm: str, norm_value: float) -> float:
    """Mean euclidean landmark error divided by the normalizer distance.

    `norm` labels which convention norm_value was computed under
    (inter_ocular | inter_pupil | box); the caller computes norm_value from
    scheme-specific landmark indices or the box size.
    """
    normalize_norm_kind(norm)
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if norm_value <= 0:
        raise DegenerateNormalizerError(f"norm_value must be positive, got {norm_value}")
    dists = np.linalg.norm(pred - gt, axis=-1)
    return float(dists.mean() / norm_value)


def failure_rate(nmes, threshold: float) -> float:
    """Fraction of per-image errors strictly greater than the threshold."""
    if threshold <= 0:
        raise ConfigurationError(f"threshold must be positive, got {threshold}")
    values = np.asarray(list(nmes), dtype=np.float64)
    if values.size == 0:
        raise UndefinedStatisticError("failure rate over an empty list is undefined")
    return float(np.count_nonzero(values > threshold) / values.size)
