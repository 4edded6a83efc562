"""Bipartite set matching between landmark queries and ground-truth landmarks.

Training supervision follows the end-to-end set-prediction recipe: each ground
truth landmark is assigned to exactly one query by minimizing a combined
classification + coordinate cost over all one-to-one assignments; queries left
over are supervised as "no landmark".
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import softmax

from ..errors import CapacityError, NumericError, ShapeError

# Cost weights mirror the loss weights (index weight 5, coordinate weight 1)
# so matching geometry and loss geometry stay consistent.
DEFAULT_COST_WEIGHTS = (5.0, 1.0)


@dataclass
class MatchResult:
    """One-to-one assignment of targets to queries.

    assignment: (query_index, target_index) pairs, one per target, sorted by
    target index. unmatched_queries: queries assigned the "no landmark" class.
    """

    assignment: list[tuple[int, int]]
    unmatched_queries: set[int]

    def matched_queries(self) -> list[int]:
        return [q for q, _ in self.assignment]


def match_cost_matrix(
    class_logits: np.ndarray,
    pred_coords: np.ndarray,
    target_ids,
    target_coords: np.ndarray,
    cost_weights: tuple[float, float] = DEFAULT_COST_WEIGHTS,
) -> np.ndarray:
    """Cost (q, t): -w_cls * softmax(logits[q])[id_t] + w_coord * l1(coords[q], coords[t])."""
    w_cls, w_coord = cost_weights
    # Non-finite logits surface as non-finite costs, which the caller rejects;
    # suppress the intermediate softmax warning they would trigger.
    with np.errstate(invalid="ignore", over="ignore"):
        probs = softmax(np.asarray(class_logits, dtype=np.float64), axis=-1)
    pred_coords = np.asarray(pred_coords, dtype=np.float64)
    target_coords = np.asarray(target_coords, dtype=np.float64).reshape(-1, 2)
    target_ids = np.asarray(target_ids, dtype=np.int64)
    l1 = np.abs(pred_coords[:, None, :] - target_coords[None, :, :]).sum(axis=-1)
    return -w_cls * probs[:, target_ids] + w_coord * l1


def hungarian_match(
    class_logits: np.ndarray,
    pred_coords: np.ndarray,
    target_ids,
    target_coords: np.ndarray,
    cost_weights: tuple[float, float] = DEFAULT_COST_WEIGHTS,
) -> MatchResult:
    """Minimum-cost assignment of every target to a distinct query.

    class_logits: (N, U+1); pred_coords: (N, 2); target_ids: length T unified
    ids; target_coords: (T, 2). Requires T <= N.
    """
    n_queries = int(np.asarray(class_logits).shape[0])
    id_array = np.asarray(target_ids)
    if id_array.ndim > 1:
        raise ShapeError(f"target ids must be a flat sequence, got shape {id_array.shape}")
    target_ids = [int(t) for t in id_array]
    n_targets = len(target_ids)
    if n_targets > n_queries:
        raise CapacityError(f"{n_targets} targets exceed {n_queries} queries")
    if n_targets == 0:
        return MatchResult(assignment=[], unmatched_queries=set(range(n_queries)))

    cost = match_cost_matrix(class_logits, pred_coords, target_ids, target_coords, cost_weights)
    if not np.all(np.isfinite(cost)):
        raise NumericError("non-finite entries in matching cost matrix")

    rows, cols = linear_sum_assignment(cost)
    pairs = sorted(((int(q), int(t)) for q, t in zip(rows, cols)), key=lambda p: p[1])
    matched = {q for q, _ in pairs}
    return MatchResult(
        assignment=pairs,
        unmatched_queries=set(range(n_queries)) - matched,
    )
