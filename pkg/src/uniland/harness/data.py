"""In-memory dataset of synthetic images plus annotations, and batch assembly.

Desk scale: everything is loaded up front, batching is an index permutation,
and no worker processes are involved, which keeps runs bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from PIL import Image

from ..errors import ConfigurationError
from ..landmarks.schemes import (
    GroundTruthAnnotation,
    LandmarkScheme,
    UnifiedIndexMap,
    load_annotations,
)


def load_image(path: str | Path) -> np.ndarray:
    """Read a grayscale image as float32 (H, W) in [0, 1]."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float32)
    except OSError as e:
        raise ConfigurationError(f"cannot read image {path}: {e}") from e
    return arr / 255.0


@dataclass
class Sample:
    image: np.ndarray
    annotation: GroundTruthAnnotation
    scheme: LandmarkScheme


class LandmarkDataset:
    """All samples from a {scheme name: annotation file} mixture, pooled."""

    def __init__(
        self,
        registry: UnifiedIndexMap,
        mixture: Mapping[str, str | Path],
        image_dir: str | Path,
    ):
        if not mixture:
            raise ConfigurationError("dataset mixture is empty")
        self.registry = registry
        image_dir = Path(image_dir)
        self.samples: list[Sample] = []
        for name in sorted(mixture):
            scheme = registry.scheme(name)
            for ann in load_annotations(mixture[name]):
                if ann.scheme_name != name:
                    raise ConfigurationError(
                        f"annotation {ann.image_id!r} claims scheme {ann.scheme_name!r} "
                        f"but was listed under {name!r}"
                    )
                if ann.count != scheme.count:
                    raise ConfigurationError(
                        f"annotation {ann.image_id!r} has {ann.count} rows, "
                        f"scheme {name!r} defines {scheme.count}"
                    )
                image = load_image(image_dir / f"{ann.image_id}.png")
                self.samples.append(Sample(image=image, annotation=ann, scheme=scheme))

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int) -> Sample:
        return self.samples[idx]

    def scheme_names(self) -> list[str]:
        return sorted({s.scheme.name for s in self.samples})


def images_to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    """Stack grayscale (H, W) arrays into a (B, 3, H, W) float tensor."""
    batch = np.stack([np.asarray(im, dtype=np.float32) for im in images])
    tensor = torch.from_numpy(batch).unsqueeze(1)
    return tensor.repeat(1, 3, 1, 1)
