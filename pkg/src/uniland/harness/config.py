"""Training run configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from ..errors import ConfigurationError
from ..losses import PA_MODES, LossWeights
from ..model.config import ModelConfig
from .augment import AugmentConfig


@dataclass
class TrainConfig:
    """Everything one training run needs besides the output directory.

    mixture maps scheme names to annotation files; val_mixture, when given,
    drives periodic validation and best-checkpoint selection. max_steps, when
    set, caps the total step count regardless of epochs.
    """

    registry_path: str = ""
    image_dir: str = ""
    mixture: dict[str, str] = field(default_factory=dict)
    val_mixture: dict[str, str] = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 100
    max_steps: int | None = None
    batch_size: int = 8
    learning_rate: float = 5e-5
    weight_decay: float = 1e-4
    seed: int = 0
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    pa_mode: str = "same_dataset"
    no_landmark_weight: float = 0.1
    eval_every: int = 200

    def validate(self) -> None:
        if not self.registry_path:
            raise ConfigurationError("registry_path is required")
        if not self.image_dir:
            raise ConfigurationError("image_dir is required")
        if not self.mixture:
            raise ConfigurationError("dataset mixture is empty")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1 when set")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.loss_weights.prototype > 0 and self.batch_size < 2:
            raise ConfigurationError(
                "batch_size must be >= 2 when the alignment loss is active (it needs pairs)"
            )
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        if self.pa_mode not in PA_MODES:
            raise ConfigurationError(f"pa_mode must be one of {PA_MODES}")
        if self.no_landmark_weight <= 0:
            raise ConfigurationError("no_landmark_weight must be > 0")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be >= 1")
        self.model.validate()

    def to_dict(self) -> dict:
        return {
            "registry_path": self.registry_path,
            "image_dir": self.image_dir,
            "mixture": dict(self.mixture),
            "val_mixture": dict(self.val_mixture),
            "model": self.model.to_dict(),
            "epochs": self.epochs,
            "max_steps": self.max_steps,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "augmentation": self.augmentation.to_dict(),
            "loss_weights": {
                "coord": self.loss_weights.coord,
                "index": self.loss_weights.index,
                "prototype": self.loss_weights.prototype,
            },
            "pa_mode": self.pa_mode,
            "no_landmark_weight": self.no_landmark_weight,
            "eval_every": self.eval_every,
        }

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: str | Path | None = None) -> "TrainConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown train config fields: {sorted(unknown)}")
        if "model" in data:
            data["model"] = ModelConfig.from_dict(data["model"])
        if "augmentation" in data:
            data["augmentation"] = AugmentConfig.from_dict(data["augmentation"])
        if "loss_weights" in data:
            data["loss_weights"] = LossWeights(**data["loss_weights"])
        config = cls(**data)
        if base_dir is not None:
            base = Path(base_dir)
            config.registry_path = str(_resolve(base, config.registry_path))
            config.image_dir = str(_resolve(base, config.image_dir))
            config.mixture = {k: str(_resolve(base, v)) for k, v in config.mixture.items()}
            config.val_mixture = {k: str(_resolve(base, v)) for k, v in config.val_mixture.items()}
        return config

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read train config {path}: {e}") from e
        return cls.from_dict(data, base_dir=path.parent)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


@dataclass
class ArtifactConfig:
    """Points evaluation and diagnostics at a finished run's artifacts."""

    checkpoint: str = ""
    registry_path: str = ""
    image_dir: str = ""
    annotations: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.checkpoint:
            raise ConfigurationError("checkpoint is required")
        if not self.registry_path:
            raise ConfigurationError("registry_path is required")
        if not self.image_dir:
            raise ConfigurationError("image_dir is required")
        if not self.annotations:
            raise ConfigurationError("annotations mapping is empty")

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: str | Path | None = None) -> "ArtifactConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown artifact config fields: {sorted(unknown)}")
        config = cls(**data)
        if base_dir is not None:
            base = Path(base_dir)
            config.checkpoint = str(_resolve(base, config.checkpoint))
            config.registry_path = str(_resolve(base, config.registry_path))
            config.image_dir = str(_resolve(base, config.image_dir))
            config.annotations = {k: str(_resolve(base, v)) for k, v in config.annotations.items()}
        return config

    @classmethod
    def load(cls, path: str | Path) -> "ArtifactConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read artifact config {path}: {e}") from e
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "checkpoint": self.checkpoint,
            "registry_path": self.registry_path,
            "image_dir": self.image_dir,
            "annotations": dict(self.annotations),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
