"""Training objectives.

Three terms: an L1 coordinate loss over matched query-target pairs, a
cross-entropy index loss in which unmatched queries must predict the extra
"no landmark" class, and a prototype-alignment penalty that pulls the gating
distributions of samples from the same dataset toward each other. The total
is their weighted sum.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DegenerateGatingError, ShapeError
from .landmarks.matching import MatchResult

log = logging.getLogger(__name__)

PA_MODES = ("same_dataset", "all_pairs")


@dataclass(frozen=True)
class LossWeights:
    coord: float = 1.0
    index: float = 5.0
    prototype: float = 0.01


@dataclass
class BatchGating:
    """Gating distributions for one batch at one feature scale.

    gates: (B, N) rows that each sum to one; dataset_ids: per-sample dataset
    (scheme) labels used to restrict alignment to same-dataset pairs.
    """

    gates: torch.Tensor
    dataset_ids: tuple[str, ...]

    ROW_SUM_TOL = 1e-3

    def __post_init__(self):
        if self.gates.ndim != 2:
            raise ShapeError(f"gates must be 2-D (batch, experts), got {tuple(self.gates.shape)}")
        if len(self.dataset_ids) != self.gates.shape[0]:
            raise ShapeError(
                f"{len(self.dataset_ids)} dataset ids for batch of {self.gates.shape[0]}"
            )
        sums = self.gates.detach().sum(dim=-1)
        if not torch.all((sums - 1.0).abs() <= self.ROW_SUM_TOL):
            worst = float((sums - 1.0).abs().max())
            raise ConfigurationError(f"gating rows must sum to 1 (worst deviation {worst:.2e})")


def gating_similarity(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity between two gating vectors."""
    na = a.norm()
    nb = b.norm()
    if float(na) == 0.0 or float(nb) == 0.0:
        raise DegenerateGatingError("cannot compare a zero gating vector")
    return (a * b).sum() / (na * nb)


def pa_loss(
    gates: torch.Tensor,
    dataset_ids: Sequence[str] | None = None,
    mode: str = "same_dataset",
) -> torch.Tensor:
    """Prototype-alignment penalty: sum of (1 - cosine) over eligible row pairs.

    With mode="same_dataset" only pairs sharing a dataset id count; with
    mode="all_pairs" every unordered pair counts. Fewer than two rows, or no
    eligible pair, yields zero.
    """
    if mode not in PA_MODES:
        raise ConfigurationError(f"unknown alignment mode: {mode!r} (choose from {PA_MODES})")
    if gates.ndim != 2:
        raise ShapeError(f"gates must be 2-D (batch, experts), got {tuple(gates.shape)}")
    batch = gates.shape[0]
    if batch < 2:
        return gates.new_zeros(())
    norms = gates.norm(dim=-1, keepdim=True)
    if torch.any(norms.detach() == 0):
        raise DegenerateGatingError("cannot align a zero gating vector")
    unit = gates / norms
    # 1 - cos(a, b) == |a_hat - b_hat|^2 / 2; the distance form is used because
    # it is exactly 0 for identical rows and exactly 1 for orthogonal one-hots.
    diff = unit.unsqueeze(1) - unit.unsqueeze(0)
    penalty = diff.pow(2).sum(dim=-1) / 2.0
    pair_mask = torch.triu(torch.ones(batch, batch, dtype=torch.bool, device=gates.device), 1)
    if mode == "same_dataset":
        if dataset_ids is None:
            raise ConfigurationError("same_dataset alignment needs dataset ids")
        if len(dataset_ids) != batch:
            raise ShapeError(f"{len(dataset_ids)} dataset ids for batch of {batch}")
        codes = {name: i for i, name in enumerate(dict.fromkeys(dataset_ids))}
        ids = torch.tensor([codes[d] for d in dataset_ids], device=gates.device)
        pair_mask = pair_mask & (ids.unsqueeze(0) == ids.unsqueeze(1))
    if not bool(pair_mask.any()):
        return gates.new_zeros(())
    return penalty[pair_mask].sum()


def batch_pa_loss(gatings: Sequence[BatchGating], mode: str = "same_dataset") -> torch.Tensor:
    """Mean alignment penalty across feature scales."""
    if not gatings:
        raise ConfigurationError("need at least one gating batch")
    terms = [pa_loss(g.gates, g.dataset_ids, mode=mode) for g in gatings]
    return torch.stack(terms).mean()


def index_labels(
    match: MatchResult,
    target_ids: Sequence[int],
    query_count: int,
    unified_size: int,
) -> torch.Tensor:
    """Per-query class labels: the matched target's unified id, else ``unified_size``."""
    labels = torch.full((query_count,), unified_size, dtype=torch.long)
    for q, t in match.assignment:
        tid = int(target_ids[t])
        if not 0 <= tid < unified_size:
            raise ConfigurationError(f"unified id {tid} outside [0, {unified_size})")
        labels[q] = tid
    return labels


def index_loss(
    index_logits: torch.Tensor,
    matches: Sequence[MatchResult],
    target_ids: Sequence[Sequence[int]],
    no_landmark_weight: float = 0.1,
) -> torch.Tensor:
    """Cross entropy over all queries, with the "no landmark" class down-weighted."""
    if index_logits.ndim != 3:
        raise ShapeError(f"index logits must be (batch, queries, classes), got {tuple(index_logits.shape)}")
    batch, query_count, classes = index_logits.shape
    if len(matches) != batch or len(target_ids) != batch:
        raise ShapeError("one match result and target id list per sample required")
    unified_size = classes - 1
    labels = torch.stack(
        [index_labels(matches[b], target_ids[b], query_count, unified_size) for b in range(batch)]
    ).to(index_logits.device)
    weight = torch.ones(classes, dtype=index_logits.dtype, device=index_logits.device)
    weight[unified_size] = no_landmark_weight
    return F.cross_entropy(index_logits.reshape(-1, classes), labels.reshape(-1), weight=weight)


def coord_loss(
    coords: torch.Tensor,
    matches: Sequence[MatchResult],
    target_coords: Sequence[np.ndarray],
) -> torch.Tensor:
    """Mean absolute error over every matched (query, target) coordinate pair."""
    if coords.ndim != 3 or coords.shape[-1] != 2:
        raise ShapeError(f"coords must be (batch, queries, 2), got {tuple(coords.shape)}")
    batch = coords.shape[0]
    if len(matches) != batch or len(target_coords) != batch:
        raise ShapeError("one match result and target array per sample required")
    preds = []
    gts = []
    for b in range(batch):
        pairs = matches[b].assignment
        if not pairs:
            continue
        q_idx = [q for q, _ in pairs]
        t_idx = [t for _, t in pairs]
        preds.append(coords[b, q_idx])
        gt = np.asarray(target_coords[b], dtype=np.float64)[t_idx]
        gts.append(torch.as_tensor(gt, dtype=coords.dtype, device=coords.device))
    if not preds:
        log.warning("coordinate loss saw no matched pairs; returning zero")
        return coords.new_zeros(())
    return F.l1_loss(torch.cat(preds), torch.cat(gts))


@dataclass
class LossValues:
    coord: torch.Tensor
    index: torch.Tensor
    prototype: torch.Tensor
    total: torch.Tensor

    def detached(self) -> dict[str, float]:
        return {
            "coord_loss": float(self.coord.detach()),
            "index_loss": float(self.index.detach()),
            "pa_loss": float(self.prototype.detach()),
            "total": float(self.total.detach()),
        }


def total_loss(
    coords: torch.Tensor,
    index_logits: torch.Tensor,
    matches: Sequence[MatchResult],
    target_coords: Sequence[np.ndarray],
    target_ids: Sequence[Sequence[int]],
    gatings: Sequence[BatchGating] = (),
    weights: LossWeights = LossWeights(),
    pa_mode: str = "same_dataset",
    no_landmark_weight: float = 0.1,
) -> LossValues:
    """Weighted sum of the three objectives.

    When no gating batches are supplied (adaptive extraction disabled) the
    alignment term is zero.
    """
    l_coord = coord_loss(coords, matches, target_coords)
    l_index = index_loss(index_logits, matches, target_ids, no_landmark_weight=no_landmark_weight)
    if gatings:
        l_pa = batch_pa_loss(gatings, mode=pa_mode)
    else:
        l_pa = coords.new_zeros(())
    total = weights.coord * l_coord + weights.index * l_index + weights.prototype * l_pa
    return LossValues(coord=l_coord, index=l_index, prototype=l_pa, total=total)
