"""Checkpoint serialization.

A checkpoint is a single .npz archive holding every state-dict entry as a
float array under its dotted parameter name, plus a ``__meta__`` entry: a
JSON string with the format version, the full model configuration, and any
caller-supplied extras (step counters, validation scores). Loading rebuilds
the model from the stored configuration, so a checkpoint is self-describing.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import torch

from ..errors import ConfigurationError
from .config import ModelConfig
from .network import UnifiedLandmarkModel

FORMAT_VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(
    path: str | Path,
    model: UnifiedLandmarkModel,
    extra: dict[str, Any] | None = None,
) -> None:
    arrays = {name: value.detach().cpu().numpy() for name, value in model.state_dict().items()}
    if META_KEY in arrays:
        raise ConfigurationError(f"parameter name collides with reserved key {META_KEY}")
    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **{META_KEY: np.array(json.dumps(meta))}, **arrays)


def load_checkpoint(path: str | Path) -> tuple[dict[str, Any], dict[str, torch.Tensor]]:
    """Return (meta, state_dict) without building a model."""
    with np.load(path, allow_pickle=False) as archive:
        if META_KEY not in archive:
            raise ConfigurationError(f"{path} is not a checkpoint: missing {META_KEY}")
        meta = json.loads(str(archive[META_KEY]))
        state = {
            name: torch.from_numpy(archive[name].copy())
            for name in archive.files
            if name != META_KEY
        }
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint format version: {version!r}")
    return meta, state


def build_from_checkpoint(path: str | Path) -> tuple[UnifiedLandmarkModel, dict[str, Any]]:
    """Rebuild the model a checkpoint describes and load its weights."""
    meta, state = load_checkpoint(path)
    config = ModelConfig.from_dict(meta["model_config"])
    model = UnifiedLandmarkModel(config)
    model.load_state_dict(state)
    model.eval()
    return model, meta
