"""Progressive prompt-driven decoding of landmark queries.

Every decoder stage first refreshes each query with a prompt vector looked up
from the first-scale prototype map (the spatial cell most similar to the
query), folds that prompt in through a gated fusion step, and only then runs
the attention stage. Prediction heads map the final queries to unified-index
logits and normalized coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

from ..errors import ConfigurationError, ShapeError


@dataclass
class Prompt:
    """Per-query prompt lookup result.

    vectors: (B, N_q, D) prototype rows gathered at the argmax cells;
    indices: (B, N_q) flattened spatial positions of those cells;
    projected_queries: (B, N_q, D) queries after the generator's projection,
    reused by the fusion step.
    """

    vectors: torch.Tensor
    indices: torch.Tensor
    projected_queries: torch.Tensor


class PromptGenerator(nn.Module):
    """Pick one prototype cell per query by similarity argmax.

    The prototype map is 1x1-projected to the query width and flattened to
    rows; each query selects the row with the highest similarity (scaled dot
    product or cosine). Selection is a hard argmax, so gradients flow through
    the gathered rows but not through the choice itself.
    """

    def __init__(self, map_channels: int, dim: int, similarity: str = "dot"):
        super().__init__()
        if similarity not in ("dot", "cosine"):
            raise ConfigurationError(f"unknown similarity kind: {similarity!r}")
        self.similarity = similarity
        self.project_map = nn.Conv2d(map_channels, dim, kernel_size=1)
        self.project_query = nn.Linear(dim, dim)

    def similarity_matrix(self, queries: torch.Tensor, rows: torch.Tensor) -> torch.Tensor:
        if self.similarity == "cosine":
            q = F.normalize(queries, dim=-1)
            r = F.normalize(rows, dim=-1)
            return q @ r.transpose(1, 2)
        return queries @ rows.transpose(1, 2) / math.sqrt(queries.shape[-1])

    def forward(self, queries: torch.Tensor, prototype_map: torch.Tensor) -> Prompt:
        if prototype_map.shape[1] != self.project_map.in_channels:
            raise ShapeError(
                f"prompt generator expects {self.project_map.in_channels} channels, "
                f"got {prototype_map.shape[1]}"
            )
        rows = self.project_map(prototype_map).flatten(2).transpose(1, 2)  # (B, HW, D)
        projected = self.project_query(queries)
        sim = self.similarity_matrix(projected, rows)  # (B, N_q, HW)
        indices = sim.argmax(dim=-1)
        gathered = rows.gather(1, indices.unsqueeze(-1).expand(-1, -1, rows.shape[-1]))
        return Prompt(vectors=gathered, indices=indices, projected_queries=projected)


class FusionBlock(nn.Module):
    """Fold a prompt into its query.

    The query-prompt product is linearly mapped to an affinity vector,
    L2-normalized per row, rescaled channel-wise by a learned vector, summed
    with the prompt, mapped once more, and added to the query residually.
    """

    EPS = 1e-6

    def __init__(self, dim: int):
        super().__init__()
        self.affinity = nn.Linear(dim, dim, bias=False)
        self.output = nn.Linear(dim, dim, bias=False)
        self.alpha = nn.Parameter(torch.ones(dim))

    def forward(self, queries: torch.Tensor, prompt: Prompt) -> torch.Tensor:
        a = self.affinity(prompt.projected_queries * prompt.vectors)
        normed = a / a.norm(dim=-1, keepdim=True).clamp_min(self.EPS)
        return queries + self.output(self.alpha * normed + prompt.vectors)


class DecoderLayer(nn.Module):
    """One decoding stage: query self-association, token cross-attention, FFN.

    The refreshed query attends over the initial query set, is normalized and
    added to the running query, cross-attends into the encoder tokens, and the
    final feed-forward consumes the normalized cross output plus the running
    query directly (its output is the stage result, with no residual wrapper).
    """

    def __init__(self, dim: int, heads: int, ffn_ratio: int = 4):
        super().__init__()
        self.query_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm_query = nn.LayerNorm(dim)
        self.token_attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm_token = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(
            nn.Linear(dim, ffn_ratio * dim),
            nn.ReLU(),
            nn.Linear(ffn_ratio * dim, dim),
        )

    def forward(
        self,
        q_prev: torch.Tensor,
        q_refined: torch.Tensor,
        q_init: torch.Tensor,
        tokens: torch.Tensor,
    ) -> torch.Tensor:
        attended, _ = self.query_attn(q_refined, q_init, q_init, need_weights=False)
        mixed = q_prev + self.norm_query(attended)
        cross, _ = self.token_attn(mixed, tokens, tokens, need_weights=False)
        return self.ffn(self.norm_token(cross) + mixed)


class PredictionHeads(nn.Module):
    """Final query states -> unified-index logits and [0, 1] coordinates.

    The index head emits one logit per unified slot plus one extra class that
    stands for "no landmark".
    """

    def __init__(self, dim: int, unified_size: int):
        super().__init__()
        self.index = nn.Linear(dim, unified_size + 1)
        self.coord = nn.Sequential(
            nn.Linear(dim, dim),
            nn.ReLU(),
            nn.Linear(dim, dim),
            nn.ReLU(),
            nn.Linear(dim, 2),
        )

    def forward(self, queries: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.index(queries), torch.sigmoid(self.coord(queries))


class ProgressiveDecoder(nn.Module):
    """Stack of prompt-refreshed decoder stages plus prediction heads.

    Each stage owns its own prompt generator and fusion block, so prompts are
    re-derived from the evolving queries at every depth. With prompts disabled
    the stages run on the raw running queries and the rest of the pipeline is
    unchanged.
    """

    def __init__(
        self,
        map_channels: int,
        token_channels: int,
        dim: int,
        depth: int,
        heads: int,
        unified_size: int,
        use_prompts: bool = True,
        similarity: str = "dot",
        ffn_ratio: int = 4,
    ):
        super().__init__()
        if depth < 1:
            raise ConfigurationError("decoder depth must be >= 1")
        self.use_prompts = use_prompts
        self.token_project = (
            nn.Linear(token_channels, dim) if token_channels != dim else nn.Identity()
        )
        self.layers = nn.ModuleList(
            DecoderLayer(dim, heads, ffn_ratio=ffn_ratio) for _ in range(depth)
        )
        if use_prompts:
            self.generators = nn.ModuleList(
                PromptGenerator(map_channels, dim, similarity=similarity) for _ in range(depth)
            )
            self.fusions = nn.ModuleList(FusionBlock(dim) for _ in range(depth))
        self.heads = PredictionHeads(dim, unified_size)

    def forward(
        self,
        queries: torch.Tensor,
        tokens: torch.Tensor,
        prototype_map: torch.Tensor | None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if self.use_prompts and prototype_map is None:
            raise ConfigurationError("decoder was built with prompts but got no prototype map")
        tokens = self.token_project(tokens)
        q_init = queries
        q_prev = queries
        for i, layer in enumerate(self.layers):
            if self.use_prompts:
                prompt = self.generators[i](q_prev, prototype_map)
                refined = self.fusions[i](q_prev, prompt)
            else:
                refined = q_prev
            q_prev = layer(q_prev, refined, q_init, tokens)
        return self.heads(q_prev)
