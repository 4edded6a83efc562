"""Procedural face-like image generation with exactly known landmarks.

Every image is an ellipse plus feature blobs drawn from a fixed 16-point
template. A per-image parameter set (center, scale, aspect, roll) maps
template offsets to normalized coordinates, so ground truth is available by
construction and is shared across annotation schemes: two schemes that both
include a unified id annotate the same point.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from ..errors import ConfigurationError
from ..landmarks.schemes import (
    GroundTruthAnnotation,
    LandmarkScheme,
    UnifiedIndexMap,
    save_annotations,
)

# Face-local offsets for the 16 synthetic unified landmarks (x right, y down).
TEMPLATE_OFFSETS: dict[int, tuple[float, float]] = {
    0: (-0.45, -0.35),   # left eye
    1: (0.45, -0.35),    # right eye
    2: (0.0, 0.05),      # nose tip
    3: (-0.28, 0.42),    # left mouth corner
    4: (0.28, 0.42),     # right mouth corner
    5: (0.0, 0.85),      # chin
    6: (-0.38, -0.55),   # left brow
    7: (0.38, -0.55),    # right brow
    8: (0.0, 0.45),      # mouth center
    9: (-0.6, 0.15),     # left cheek
    10: (0.6, 0.15),     # right cheek
    11: (0.0, -0.75),    # forehead
    12: (-0.5, 0.58),    # left jaw
    13: (0.5, 0.58),     # right jaw
    14: (0.0, -0.15),    # nose bridge
    15: (0.0, 0.28),     # philtrum
}

SYNTH_UNIFIED_SIZE = 16

# Horizontal-mirror partner of each synthetic unified id.
UNIFIED_MIRROR: dict[int, int] = {
    0: 1, 1: 0, 2: 2, 3: 4, 4: 3, 5: 5, 6: 7, 7: 6,
    8: 8, 9: 10, 10: 9, 11: 11, 12: 13, 13: 12, 14: 14, 15: 15,
}


@dataclass(frozen=True)
class FaceParams:
    """Pose of one synthetic face in normalized image coordinates."""

    cx: float
    cy: float
    scale: float
    aspect: float
    roll: float


def sample_face_params(rng: np.random.Generator) -> FaceParams:
    return FaceParams(
        cx=0.5 + rng.uniform(-0.06, 0.06),
        cy=0.5 + rng.uniform(-0.06, 0.06),
        scale=rng.uniform(0.28, 0.38),
        aspect=rng.uniform(0.85, 1.15),
        roll=rng.uniform(-0.12, 0.12),
    )


def template_positions(params: FaceParams, unified_ids: Sequence[int]) -> np.ndarray:
    """Normalized (x, y) of the given unified ids for one face.

    position = center + scale * R(roll) @ (aspect * ox, oy). This formula is
    the ground truth: annotations are exactly these values.
    """
    cos_r = math.cos(params.roll)
    sin_r = math.sin(params.roll)
    out = np.empty((len(unified_ids), 2), dtype=np.float64)
    for i, u in enumerate(unified_ids):
        if u not in TEMPLATE_OFFSETS:
            raise ConfigurationError(f"unified id {u} has no template offset")
        ox, oy = TEMPLATE_OFFSETS[u]
        ox = ox * params.aspect
        out[i, 0] = params.cx + params.scale * (cos_r * ox - sin_r * oy)
        out[i, 1] = params.cy + params.scale * (sin_r * ox + cos_r * oy)
    return out


def render_face(
    params: FaceParams,
    image_size: int,
    noise: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Draw one face as a (image_size, image_size) uint8 grayscale array."""
    if noise > 0 and rng is None:
        raise ConfigurationError("noisy rendering needs an rng")
    coords = (np.arange(image_size, dtype=np.float64) + 0.5) / image_size
    xx, yy = np.meshgrid(coords, coords)
    img = np.full((image_size, image_size), 0.2, dtype=np.float64)

    # Head: a soft ellipse aligned with the face roll.
    dx = xx - params.cx
    dy = yy - params.cy
    cos_r = math.cos(params.roll)
    sin_r = math.sin(params.roll)
    ex = (cos_r * dx + sin_r * dy) / (params.scale * params.aspect * 0.78)
    ey = (-sin_r * dx + cos_r * dy) / (params.scale * 0.97)
    d2 = ex * ex + ey * ey
    img += 0.3 * np.exp(-(d2 ** 2))

    # Feature blobs at every template landmark; alternating polarity and
    # id-dependent width make individual landmarks visually distinct.
    positions = template_positions(params, sorted(TEMPLATE_OFFSETS))
    for u, (px, py) in zip(sorted(TEMPLATE_OFFSETS), positions):
        sigma = (0.025 + 0.006 * (u % 4)) * (params.scale / 0.33)
        amp = 0.55 if u % 2 == 0 else -0.4
        r2 = (xx - px) ** 2 + (yy - py) ** 2
        img += amp * np.exp(-r2 / (2.0 * sigma * sigma))

    if noise > 0:
        img += rng.normal(0.0, noise, size=img.shape)
    return (np.clip(img, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def scheme_from_unified_ids(name: str, unified_ids: Sequence[int]) -> LandmarkScheme:
    """Build a synthetic scheme; the flip permutation follows the template mirror."""
    ids = list(unified_ids)
    index_of = {u: i for i, u in enumerate(ids)}
    flip_perm = []
    for u in ids:
        partner = UNIFIED_MIRROR[u]
        if partner not in index_of:
            raise ConfigurationError(
                f"scheme {name!r} contains id {u} but not its mirror partner {partner}"
            )
        flip_perm.append(index_of[partner])
    io_pair = (index_of[0], index_of[1]) if 0 in index_of and 1 in index_of else None
    return LandmarkScheme(
        name=name,
        unified_ids=tuple(ids),
        flip_perm=tuple(flip_perm),
        io_pair=io_pair,
        ip_pair=io_pair,
    )


def toy_registry() -> UnifiedIndexMap:
    """The tested default registry: two small schemes over a 16-slot index.

    toy5 (5 points) and toy7 (7 points) share unified ids {0, 1, 2}.
    """
    registry = UnifiedIndexMap(unified_size=SYNTH_UNIFIED_SIZE)
    registry.register(scheme_from_unified_ids("toy5", [0, 1, 2, 3, 4]))
    registry.register(scheme_from_unified_ids("toy7", [0, 1, 2, 5, 6, 7, 8]))
    return registry


ASSIGN_MODES = ("round_robin", "all")


@dataclass
class SynthConfig:
    """Settings for one synthetic dataset."""

    n_images: int = 8
    image_size: int = 64
    noise: float = 0.02
    schemes: tuple[str, ...] = ()
    assign: str = "round_robin"
    registry_path: str | None = None

    def __post_init__(self):
        if self.n_images < 1:
            raise ConfigurationError("n_images must be >= 1")
        if self.image_size < 8:
            raise ConfigurationError("image_size must be >= 8")
        if self.noise < 0:
            raise ConfigurationError("noise must be >= 0")
        if self.assign not in ASSIGN_MODES:
            raise ConfigurationError(f"assign must be one of {ASSIGN_MODES}")
        self.schemes = tuple(self.schemes)

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "image_size": self.image_size,
            "noise": self.noise,
            "schemes": list(self.schemes),
            "assign": self.assign,
            "registry_path": self.registry_path,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown synth config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "SynthConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read synth config {path}: {e}") from e
        return cls.from_dict(data)


@dataclass
class SynthResult:
    registry_path: Path
    image_dir: Path
    annotation_paths: dict[str, Path]
    counts: dict[str, int] = field(default_factory=dict)


def synth_dataset(config: SynthConfig, out_dir: str | Path, seed: int) -> SynthResult:
    """Generate images plus per-scheme annotation files under out_dir.

    With assign="round_robin" each image is annotated under exactly one
    scheme, cycling through the scheme list; with assign="all" every image is
    annotated under every scheme. Deterministic for a fixed seed.
    """
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)

    if config.registry_path:
        registry = UnifiedIndexMap.load(config.registry_path)
    else:
        registry = toy_registry()
    scheme_names = list(config.schemes) if config.schemes else sorted(registry.schemes)
    for name in scheme_names:
        registry.scheme(name)  # raises on unknown names

    registry_path = out_dir / "registry.json"
    registry.save(registry_path)

    rng = np.random.default_rng(seed)
    per_scheme: dict[str, list[GroundTruthAnnotation]] = {name: [] for name in scheme_names}
    for i in range(config.n_images):
        params = sample_face_params(rng)
        image_id = f"img_{i:05d}"
        img = render_face(params, config.image_size, config.noise, rng)
        Image.fromarray(img, mode="L").save(image_dir / f"{image_id}.png")
        if config.assign == "round_robin":
            targets = [scheme_names[i % len(scheme_names)]]
        else:
            targets = scheme_names
        for name in targets:
            scheme = registry.scheme(name)
            coords = template_positions(params, scheme.unified_ids)
            per_scheme[name].append(
                GroundTruthAnnotation(image_id=image_id, scheme_name=name, coords=coords)
            )

    annotation_paths = {}
    counts = {}
    for name in scheme_names:
        path = out_dir / f"annotations_{name}.jsonl"
        save_annotations(path, per_scheme[name])
        annotation_paths[name] = path
        counts[name] = len(per_scheme[name])
    return SynthResult(
        registry_path=registry_path,
        image_dir=image_dir,
        annotation_paths=annotation_paths,
        counts=counts,
    )
