"""Shared helpers for the test suite."""
from __future__ import annotations

from pathlib import Path

from uniland.harness.config import TrainConfig
from uniland.harness.synth import SynthConfig, SynthResult, synth_dataset
from uniland.model.config import ModelConfig


def tiny_model_config(**overrides) -> ModelConfig:
    """A small model that trains in seconds on one CPU core."""
    base = dict(
        backbone="tiny",
        expert_count=4,
        topk=2,
        routing_heads=4,
        encoder_depth=2,
        encoder_heads=4,
        token_channels=32,
        decoder_depth=2,
        decoder_heads=4,
        query_count=12,
        unified_size=16,
    )
    base.update(overrides)
    return ModelConfig(**base)


def make_synth(
    out_dir: Path,
    n_images: int = 8,
    assign: str = "round_robin",
    noise: float = 0.02,
    seed: int = 11,
    image_size: int = 64,
) -> SynthResult:
    config = SynthConfig(
        n_images=n_images, image_size=image_size, noise=noise, assign=assign
    )
    return synth_dataset(config, out_dir, seed=seed)


def make_train_config(data: SynthResult, model: ModelConfig | None = None, **overrides) -> TrainConfig:
    base = dict(
        registry_path=str(data.registry_path),
        image_dir=str(data.image_dir),
        mixture={name: str(path) for name, path in data.annotation_paths.items()},
        model=model or tiny_model_config(),
        max_steps=5,
        batch_size=4,
        learning_rate=1e-3,
        seed=3,
    )
    base.update(overrides)
    return TrainConfig(**base)
