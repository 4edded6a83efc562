"""Adaptive prototype extraction and encoding.

Each feature scale owns a bank of low-rank convolutional experts and a router.
The router turns the feature map into a softmax distribution over experts; the
TopK experts are blended by their gate scores and the blend multiplies the
input feature map element-wise, yielding that scale's prototype. Prototypes
from both scales are channel-aligned, flattened into one token sequence, and
refined by a stack of self-attention blocks whose intermediate outputs are
fused through a scaled MLP shortcut.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from ..errors import ConfigurationError, ShapeError


class PrototypeExpert(nn.Module):
    """Low-rank residual transform: 3x3 conv down to `rank`, 1x1 conv back up, plus bias.

    Output channel count equals input channel count so expert blends can gate
    the feature map they were computed from.
    """

    def __init__(self, channels: int, rank: int):
        super().__init__()
        if not 1 <= rank <= channels:
            raise ConfigurationError(f"expert rank {rank} must be in [1, channels={channels}]")
        self.reduce = nn.Conv2d(channels, rank, kernel_size=3, padding=1, bias=False)
        self.expand = nn.Conv2d(rank, channels, kernel_size=1, bias=False)
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.reduce.in_channels:
            raise ShapeError(
                f"expert expects {self.reduce.in_channels} channels, got {x.shape[1]}"
            )
        return self.expand(self.reduce(x)) + self.bias.view(1, -1, 1, 1)


@dataclass
class GatingDecision:
    """Router output for a batch.

    distribution: (B, N) softmax over experts; indices: (B, K) TopK expert ids
    in descending-score order with lower index winning ties; scores: (B, K)
    the distribution entries at those indices; logits: (B, N) pre-softmax
    activations, kept for diagnostics and independent gate recomputation.
    """

    distribution: torch.Tensor
    indices: torch.Tensor
    scores: torch.Tensor
    logits: torch.Tensor

    @property
    def num_experts(self) -> int:
        return self.distribution.shape[-1]


def topk_stable(values: torch.Tensor, k: int) -> tuple[torch.Tensor, torch.Tensor]:
    """TopK along the last axis with deterministic lower-index tie-breaking."""
    n = values.shape[-1]
    if not 1 <= k <= n:
        raise ConfigurationError(f"topk {k} must be in [1, {n}]")
    order = torch.argsort(values, dim=-1, descending=True, stable=True)
    indices = order[..., :k]
    return values.gather(-1, indices), indices


class ExpertRouter(nn.Module):
    """Feature map -> gating distribution over experts, plus TopK selection.

    Pipeline: 3x3 conv to C/4 channels, flatten to a token sequence, MHSA for
    contextual association, a parallel position-awareness branch (per-position
    C/4 -> 1 -> N maps), channel concat, 1x1 mix down to N, global average
    pooling, softmax.
    """

    def __init__(self, channels: int, num_experts: int, topk: int, heads: int = 4):
        super().__init__()
        if channels % 4:
            raise ConfigurationError(f"router channels {channels} must be divisible by 4")
        reduced = channels // 4
        if reduced % heads:
            raise ConfigurationError(f"reduced channels {reduced} not divisible by heads={heads}")
        if not 1 <= topk <= num_experts:
            raise ConfigurationError(f"topk {topk} must be in [1, num_experts={num_experts}]")
        self.num_experts = num_experts
        self.topk = topk
        self.reduce = nn.Conv2d(channels, reduced, kernel_size=3, padding=1)
        self.context = nn.MultiheadAttention(reduced, heads, batch_first=True)
        self.position_squeeze = nn.Linear(reduced, 1)
        self.position_expand = nn.Linear(1, num_experts)
        self.mix = nn.Linear(reduced + num_experts, num_experts)

    def gate_logits(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.reduce.in_channels:
            raise ShapeError(f"router expects {self.reduce.in_channels} channels, got {x.shape[1]}")
        seq = self.reduce(x).flatten(2).transpose(1, 2)  # (B, HW, C/4)
        ctx, _ = self.context(seq, seq, seq, need_weights=False)
        pos = self.position_expand(self.position_squeeze(seq))  # (B, HW, N)
        mixed = self.mix(torch.cat([ctx, pos], dim=-1))  # (B, HW, N)
        return mixed.mean(dim=1)

    def forward(self, x: torch.Tensor, k: int | None = None) -> GatingDecision:
        logits = self.gate_logits(x)
        distribution = torch.softmax(logits, dim=-1)
        scores, indices = topk_stable(distribution, self.topk if k is None else k)
        return GatingDecision(
            distribution=distribution, indices=indices, scores=scores, logits=logits
        )


def extract_prototype(
    x: torch.Tensor, experts: Sequence[nn.Module], gate: GatingDecision
) -> torch.Tensor:
    """Blend the selected experts by their gate scores, then gate the input map.

    p = [sum_k g_k * E_k(x)] * x. Gradient flows through the selected gate
    scores only; experts outside the selection receive no gradient.
    """
    n = len(experts)
    if gate.num_experts != n:
        raise ConfigurationError(
            f"gate covers {gate.num_experts} experts but {n} were provided"
        )
    batch = x.shape[0]
    weights = torch.zeros(batch, n, dtype=x.dtype, device=x.device)
    weights = weights.scatter(1, gate.indices, gate.scores)
    blend = torch.zeros_like(x)
    for idx in sorted(set(gate.indices.flatten().tolist())):
        blend = blend + weights[:, idx].view(batch, 1, 1, 1) * experts[idx](x)
    return blend * x


class AdaptivePrototypeExtractor(nn.Module):
    """Router plus expert bank for one feature scale."""

    def __init__(self, channels: int, num_experts: int, topk: int, rank: int, heads: int = 4):
        super().__init__()
        self.router = ExpertRouter(channels, num_experts, topk, heads=heads)
        self.experts = nn.ModuleList(PrototypeExpert(channels, rank) for _ in range(num_experts))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, GatingDecision]:
        gate = self.router(x)
        return extract_prototype(x, self.experts, gate), gate


class PrototypeEncoder(nn.Module):
    """Self-attention refinement of the flattened two-scale prototype tokens.

    Both prototypes are 1x1-projected to the token width, flattened, and
    concatenated (token count = h1*w1 + h2*w2). After L encoder blocks, the
    intermediate block outputs are concatenated channel-wise, fused by an MLP,
    scaled, and added to the final block output.
    """

    def __init__(
        self,
        c1: int,
        c2: int,
        token_channels: int,
        depth: int,
        heads: int,
        fusion_scale: float,
        ffn_dim: int | None = None,
    ):
        super().__init__()
        if depth < 1:
            raise ConfigurationError("encoder depth must be >= 1")
        self.depth = depth
        self.fusion_scale = fusion_scale
        self.align1 = nn.Conv2d(c1, token_channels, kernel_size=1)
        self.align2 = nn.Conv2d(c2, token_channels, kernel_size=1)
        ffn_dim = ffn_dim or 4 * token_channels
        self.blocks = nn.ModuleList(
            nn.TransformerEncoderLayer(
                token_channels, heads, dim_feedforward=ffn_dim, dropout=0.0, batch_first=True
            )
            for _ in range(depth)
        )
        if depth >= 2:
            self.fuse = nn.Sequential(
                nn.Linear((depth - 1) * token_channels, token_channels),
                nn.GELU(),
                nn.Linear(token_channels, token_channels),
            )

    def tokens(self, p1: torch.Tensor, p2: torch.Tensor) -> torch.Tensor:
        t1 = self.align1(p1).flatten(2).transpose(1, 2)
        t2 = self.align2(p2).flatten(2).transpose(1, 2)
        return torch.cat([t1, t2], dim=1)

    def forward(self, p1: torch.Tensor, p2: torch.Tensor) -> torch.Tensor:
        h = self.tokens(p1, p2)
        outputs = []
        for block in self.blocks:
            h = block(h)
            outputs.append(h)
        refined = outputs[-1]
        if self.depth >= 2:
            refined = self.fusion_scale * self.fuse(torch.cat(outputs[:-1], dim=-1)) + refined
        return refined
