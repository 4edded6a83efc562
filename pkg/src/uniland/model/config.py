"""Model configuration: backbone shape contract plus encoder/decoder hyperparameters.

Defaults follow the reference operating point (16 experts with TopK 8,
6 encoder and 6 decoder levels, 124 queries over a 124-slot unified index,
256-channel tokens); the "tiny" backbone profile keeps every shape contract
at desk-test scale.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import ConfigurationError


@dataclass(frozen=True)
class BackboneSpec:
    """Output contract of the feature backbone: two scales (c1,h1,w1), (c2,h2,w2)."""

    input_size: int
    c1: int
    h1: int
    w1: int
    c2: int
    h2: int
    w2: int

    def __post_init__(self):
        if min(self.input_size, self.c1, self.h1, self.w1, self.c2, self.h2, self.w2) <= 0:
            raise ConfigurationError("backbone dimensions must be positive")
        if self.h1 != self.w1 or self.h2 != self.w2:
            raise ConfigurationError("backbone feature maps must be square")
        if self.h1 != 2 * self.h2:
            raise ConfigurationError("first scale must have twice the resolution of the second")
        if self.input_size % self.h1 != 0:
            raise ConfigurationError(
                f"input size {self.input_size} not divisible by first-scale resolution {self.h1}"
            )
        reduction = self.input_size // self.h1
        if reduction & (reduction - 1):
            raise ConfigurationError(f"input/feature reduction {reduction} must be a power of two")

    @property
    def token_count(self) -> int:
        return self.h1 * self.w1 + self.h2 * self.w2


BACKBONE_PROFILES: dict[str, BackboneSpec] = {
    "full": BackboneSpec(input_size=512, c1=1024, h1=32, w1=32, c2=2048, h2=16, w2=16),
    "tiny": BackboneSpec(input_size=64, c1=32, h1=8, w1=8, c2=64, h2=4, w2=4),
}


@dataclass
class ModelConfig:
    backbone: str | dict | BackboneSpec = "full"
    # Adaptive prototype extraction
    use_ape: bool = True
    expert_count: int = 16
    topk: int = 8
    expert_rank: int | None = None  # None: channels // 8 per scale
    routing_heads: int = 4
    # Prototype encoder
    encoder_depth: int = 6
    encoder_heads: int = 8
    token_channels: int = 256
    fusion_scale: float = 0.1
    # Progressive decoder
    use_prompts: bool = True
    query_count: int = 124
    query_dim: int | None = None  # None: token_channels
    decoder_depth: int = 6
    decoder_heads: int = 8
    similarity: str = "dot"  # dot | cosine
    ffn_ratio: int = 4
    # Prediction heads
    unified_size: int = 124

    def __post_init__(self):
        self.validate()

    def backbone_spec(self) -> BackboneSpec:
        if isinstance(self.backbone, BackboneSpec):
            return self.backbone
        if isinstance(self.backbone, str):
            if self.backbone not in BACKBONE_PROFILES:
                raise ConfigurationError(
                    f"unknown backbone profile {self.backbone!r}; "
                    f"known: {sorted(BACKBONE_PROFILES)}"
                )
            return BACKBONE_PROFILES[self.backbone]
        return BackboneSpec(**self.backbone)

    @property
    def resolved_query_dim(self) -> int:
        return self.query_dim if self.query_dim is not None else self.token_channels

    def expert_rank_for(self, channels: int) -> int:
        rank = self.expert_rank if self.expert_rank is not None else max(1, channels // 8)
        if rank >= channels:
            raise ConfigurationError(f"expert rank {rank} must be below channel count {channels}")
        return rank

    def validate(self) -> None:
        spec = self.backbone_spec()
        if self.use_ape:
            if self.expert_count < 1:
                raise ConfigurationError("expert_count must be >= 1")
            if not 1 <= self.topk <= self.expert_count:
                raise ConfigurationError(
                    f"topk {self.topk} must be in [1, expert_count={self.expert_count}]"
                )
            for c in (spec.c1, spec.c2):
                if c % 4:
                    raise ConfigurationError(f"backbone channels {c} must be divisible by 4 for routing")
                if (c // 4) % self.routing_heads:
                    raise ConfigurationError(
                        f"routing channels {c // 4} not divisible by routing_heads={self.routing_heads}"
                    )
                self.expert_rank_for(c)
        if self.encoder_depth < 1 or self.decoder_depth < 1:
            raise ConfigurationError("encoder_depth and decoder_depth must be >= 1")
        if self.token_channels % self.encoder_heads:
            raise ConfigurationError(
                f"token_channels {self.token_channels} not divisible by encoder_heads={self.encoder_heads}"
            )
        if self.resolved_query_dim % self.decoder_heads:
            raise ConfigurationError(
                f"query_dim {self.resolved_query_dim} not divisible by decoder_heads={self.decoder_heads}"
            )
        if self.query_count < 1:
            raise ConfigurationError("query_count must be >= 1")
        if self.unified_size < 1:
            raise ConfigurationError("unified_size must be >= 1")
        if self.similarity not in ("dot", "cosine"):
            raise ConfigurationError(f"similarity must be 'dot' or 'cosine', got {self.similarity!r}")
        if self.ffn_ratio < 1:
            raise ConfigurationError("ffn_ratio must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.backbone, BackboneSpec):
            d["backbone"] = asdict(self.backbone)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read model config {path}: {e}") from e
        return cls.from_dict(data)
