"""End-to-end unified landmark network.

Backbone features at two scales are turned into prototypes by the adaptive
extractors, refined into a token sequence by the encoder, and decoded by a
fixed set of learned queries into unified-index logits plus normalized
coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .apae import AdaptivePrototypeExtractor, GatingDecision, PrototypeEncoder
from .backbone import ConvBackbone
from .config import ModelConfig
from .ppad import ProgressiveDecoder


@dataclass
class ModelOutput:
    """Per-image predictions plus the routing decisions that produced them.

    index_logits: (B, N_q, U + 1) with the last class meaning "no landmark";
    coords: (B, N_q, 2) in [0, 1]; gates: one GatingDecision per feature scale
    (empty when adaptive extraction is disabled).
    """

    index_logits: torch.Tensor
    coords: torch.Tensor
    gates: tuple[GatingDecision, ...] = field(default_factory=tuple)


class UnifiedLandmarkModel(nn.Module):
    """Backbone, prototype extraction, encoding, and query decoding in one module."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        spec = config.backbone_spec()
        self.backbone = ConvBackbone(spec)
        if config.use_ape:
            self.extract1 = AdaptivePrototypeExtractor(
                spec.c1,
                config.expert_count,
                config.topk,
                config.expert_rank_for(spec.c1),
                heads=config.routing_heads,
            )
            self.extract2 = AdaptivePrototypeExtractor(
                spec.c2,
                config.expert_count,
                config.topk,
                config.expert_rank_for(spec.c2),
                heads=config.routing_heads,
            )
        dim = config.resolved_query_dim
        self.encoder = PrototypeEncoder(
            spec.c1,
            spec.c2,
            config.token_channels,
            config.encoder_depth,
            config.encoder_heads,
            config.fusion_scale,
        )
        self.queries = nn.Embedding(config.query_count, dim)
        self.decoder = ProgressiveDecoder(
            spec.c1,
            config.token_channels,
            dim,
            config.decoder_depth,
            config.decoder_heads,
            config.unified_size,
            use_prompts=config.use_prompts,
            similarity=config.similarity,
            ffn_ratio=config.ffn_ratio,
        )

    @property
    def token_count(self) -> int:
        spec = self.config.backbone_spec()
        return spec.h1 * spec.w1 + spec.h2 * spec.w2

    def forward(self, images: torch.Tensor) -> ModelOutput:
        x1, x2 = self.backbone(images)
        if self.config.use_ape:
            p1, gate1 = self.extract1(x1)
            p2, gate2 = self.extract2(x2)
            gates: tuple[GatingDecision, ...] = (gate1, gate2)
        else:
            p1, p2 = x1, x2
            gates = ()
        tokens = self.encoder(p1, p2)
        batch = images.shape[0]
        queries = self.queries.weight.unsqueeze(0).expand(batch, -1, -1)
        prototype_map = p1 if self.config.use_prompts else None
        index_logits, coords = self.decoder(queries, tokens, prototype_map)
        return ModelOutput(index_logits=index_logits, coords=coords, gates=gates)
