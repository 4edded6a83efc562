"""Inference and metric reporting for one scheme.

At inference the unified index makes decoding deterministic: for every
unified id the target scheme needs, the query with the highest softmax
probability for that id supplies the coordinates (ties go to the lower query
index). Set matching is a training-time device only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..errors import ConfigurationError
from ..landmarks.metrics import failure_rate, nme, normalize_norm_kind
from ..landmarks.schemes import (
    GroundTruthAnnotation,
    LandmarkScheme,
    UnifiedIndexMap,
    from_unified,
    load_annotations,
)
from ..model.network import UnifiedLandmarkModel
from .data import images_to_tensor, load_image


def predict_batch(
    model: UnifiedLandmarkModel, images: torch.Tensor
) -> tuple[np.ndarray, np.ndarray]:
    """Run the model; return softmax class probabilities and coordinates as numpy."""
    with torch.no_grad():
        out = model(images)
        probs = torch.softmax(out.index_logits, dim=-1)
    return probs.double().cpu().numpy(), out.coords.double().cpu().numpy()


def select_for_scheme(
    probs: np.ndarray, coords: np.ndarray, scheme: LandmarkScheme
) -> np.ndarray:
    """Decode one image's queries into the scheme's (count, 2) landmark matrix."""
    pred = {}
    for uid in scheme.unified_ids:
        q = int(np.argmax(probs[:, uid]))
        pred[uid] = (float(coords[q, 0]), float(coords[q, 1]))
    return from_unified(pred, scheme)


def index_hit_fraction(probs: np.ndarray, scheme: LandmarkScheme) -> float:
    """Fraction of the scheme's ids whose selected query argmax-classifies as that id."""
    hits = 0
    for uid in scheme.unified_ids:
        q = int(np.argmax(probs[:, uid]))
        hits += int(np.argmax(probs[q]) == uid)
    return hits / scheme.count


def scheme_norm_value(scheme: LandmarkScheme, gt: np.ndarray, norm_kind: str) -> float:
    """Per-image normalizer: a landmark-pair distance or the box size sqrt(w*h)."""
    kind = normalize_norm_kind(norm_kind)
    if kind == "inter_ocular" or kind == "inter_pupil":
        pair = scheme.io_pair if kind == "inter_ocular" else scheme.ip_pair
        if pair is None:
            raise ConfigurationError(
                f"scheme {scheme.name!r} defines no landmark pair for norm {kind!r}"
            )
        return float(np.linalg.norm(gt[pair[0]] - gt[pair[1]]))
    width = float(gt[:, 0].max() - gt[:, 0].min())
    height = float(gt[:, 1].max() - gt[:, 1].min())
    return float(np.sqrt(width * height))


@dataclass
class EvalReport:
    scheme: str
    norm_kind: str
    fr_threshold: float
    count: int
    nme_mean: float
    failure_rate: float
    index_accuracy: float
    per_image: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "norm_kind": self.norm_kind,
            "fr_threshold": self.fr_threshold,
            "count": self.count,
            "nme_mean": self.nme_mean,
            "failure_rate": self.failure_rate,
            "index_accuracy": self.index_accuracy,
            "per_image": self.per_image,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def evaluate_dataset(
    model: UnifiedLandmarkModel,
    registry: UnifiedIndexMap,
    scheme_name: str,
    annotations_path: str | Path,
    image_dir: str | Path,
    norm_kind: str = "io",
    fr_threshold: float = 0.10,
    batch_size: int = 16,
    oracle: bool = False,
) -> EvalReport:
    """Evaluate a checkpointed model on one scheme's annotation file.

    With oracle=True the ground truth is injected in place of the model's
    coordinates (and every class counted correct), which pins the metric
    pipeline's zero point.
    """
    if registry.unified_size != model.config.unified_size:
        raise ConfigurationError(
            f"registry unified size {registry.unified_size} != model "
            f"unified size {model.config.unified_size}"
        )
    scheme = registry.scheme(scheme_name)
    kind = normalize_norm_kind(norm_kind)
    annotations = load_annotations(annotations_path)
    if not annotations:
        raise ConfigurationError(f"no annotations in {annotations_path}")
    image_dir = Path(image_dir)
    model.eval()

    per_image: list[dict] = []
    nmes: list[float] = []
    hit_sum = 0.0
    for start in range(0, len(annotations), batch_size):
        chunk = annotations[start : start + batch_size]
        images = images_to_tensor([load_image(image_dir / f"{a.image_id}.png") for a in chunk])
        if not oracle:
            probs, coords = predict_batch(model, images)
        for b, ann in enumerate(chunk):
            if oracle:
                pred = ann.coords.copy()
                hit = 1.0
            else:
                pred = select_for_scheme(probs[b], coords[b], scheme)
                hit = index_hit_fraction(probs[b], scheme)
            norm_value = scheme_norm_value(scheme, ann.coords, kind)
            value = nme(pred, ann.coords, kind, norm_value)
            nmes.append(value)
            hit_sum += hit
            per_image.append({"image_id": ann.image_id, "nme": value})
    return EvalReport(
        scheme=scheme.name,
        norm_kind=kind,
        fr_threshold=fr_threshold,
        count=len(annotations),
        nme_mean=float(np.mean(nmes)),
        failure_rate=failure_rate(nmes, fr_threshold),
        index_accuracy=hit_sum / len(annotations),
        per_image=per_image,
    )


def mean_unit_nme(
    model: UnifiedLandmarkModel,
    samples: Sequence,
    batch_size: int = 16,
) -> float:
    """Mean NME with norm_value 1 over Sample objects; used for checkpoint selection."""
    model.eval()
    values = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        images = images_to_tensor([s.image for s in chunk])
        probs, coords = predict_batch(model, images)
        for b, sample in enumerate(chunk):
            pred = select_for_scheme(probs[b], coords[b], sample.scheme)
            # norm_value 1.0: the whole unit image is the box.
            values.append(nme(pred, sample.annotation.coords, "box", 1.0))
    return float(np.mean(values))


def unit_nme_and_accuracy(
    model: UnifiedLandmarkModel,
    samples: Sequence,
    batch_size: int = 16,
) -> tuple[float, float]:
    """Mean unit-normalized NME plus mean per-image index hit fraction."""
    model.eval()
    values = []
    hits = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        images = images_to_tensor([s.image for s in chunk])
        probs, coords = predict_batch(model, images)
        for b, sample in enumerate(chunk):
            pred = select_for_scheme(probs[b], coords[b], sample.scheme)
            values.append(nme(pred, sample.annotation.coords, "box", 1.0))
            hits.append(index_hit_fraction(probs[b], sample.scheme))
    return float(np.mean(values)), float(np.mean(hits))
