"""Rotation and horizontal-flip augmentation applied jointly to pixels and landmarks.

Coordinates are normalized to [0, 1]; rotation is about the image center
(0.5, 0.5) with the convention R(t) = [[cos t, -sin t], [sin t, cos t]] acting
on (x, y). Pixels are resampled with the inverse map so the image and the
annotation move together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from ..errors import ConfigurationError
from ..landmarks.schemes import GroundTruthAnnotation, LandmarkScheme, flip_annotation


@dataclass(frozen=True)
class AugmentConfig:
    max_rotation_deg: float = 30.0
    flip_prob: float = 0.5

    def __post_init__(self):
        if self.max_rotation_deg < 0:
            raise ConfigurationError("max_rotation_deg must be >= 0")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigurationError("flip_prob must be in [0, 1]")

    def to_dict(self) -> dict:
        return {"max_rotation_deg": self.max_rotation_deg, "flip_prob": self.flip_prob}

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown augmentation fields: {sorted(unknown)}")
        return cls(**data)


def rotate_coords(coords: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotate normalized (x, y) rows by angle_rad about (0.5, 0.5)."""
    coords = np.asarray(coords, dtype=np.float64)
    c = math.cos(angle_rad)
    s = math.sin(angle_rad)
    dx = coords[:, 0] - 0.5
    dy = coords[:, 1] - 0.5
    out = np.empty_like(coords)
    out[:, 0] = 0.5 + c * dx - s * dy
    out[:, 1] = 0.5 + s * dx + c * dy
    return out


def rotate_image(image: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotate a (H, W) float image about its center, bilinear, edge-padded."""
    if angle_rad == 0.0:
        return image.copy()
    h, w = image.shape
    rows = (np.arange(h, dtype=np.float64) + 0.5) / h
    cols = (np.arange(w, dtype=np.float64) + 0.5) / w
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    c = math.cos(-angle_rad)
    s = math.sin(-angle_rad)
    dx = xx - 0.5
    dy = yy - 0.5
    src_x = 0.5 + c * dx - s * dy
    src_y = 0.5 + s * dx + c * dy
    sample = np.stack([src_y * h - 0.5, src_x * w - 0.5])
    return map_coordinates(image, sample, order=1, mode="nearest")


def rotate_image_and_coords(
    image: np.ndarray, coords: np.ndarray, angle_rad: float
) -> tuple[np.ndarray, np.ndarray]:
    return rotate_image(image, angle_rad), rotate_coords(coords, angle_rad)


def augment(
    image: np.ndarray,
    ann: GroundTruthAnnotation,
    scheme: LandmarkScheme,
    config: AugmentConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, GroundTruthAnnotation]:
    """One random rotation-then-maybe-flip draw; coordinates clamped to [0, 1].

    Both random draws are consumed on every call so the rng stream advances
    identically whatever the configured ranges.
    """
    max_rad = math.radians(config.max_rotation_deg)
    angle = float(rng.uniform(-max_rad, max_rad))
    do_flip = bool(rng.random() < config.flip_prob)

    if angle != 0.0:
        image, coords = rotate_image_and_coords(image, ann.coords, angle)
        ann = GroundTruthAnnotation(
            image_id=ann.image_id, scheme_name=ann.scheme_name, coords=coords
        )
    else:
        image = image.copy()
    if do_flip:
        image = np.fliplr(image).copy()
        ann = flip_annotation(ann, scheme)
    clamped = np.clip(ann.coords, 0.0, 1.0)
    ann = GroundTruthAnnotation(image_id=ann.image_id, scheme_name=ann.scheme_name, coords=clamped)
    return image, ann
