"""Landmark schemes and the unified landmark index.

A scheme is one dataset's annotation convention: how many landmarks it has,
where each one lives in the shared unified index, and how rows pair up under a
horizontal flip. Conversions to/from the unified index let heterogeneous
datasets share annotation information. Coordinates are normalized to [0, 1]
per axis everywhere in this package; pixel space exists only at I/O
boundaries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ..errors import ConfigurationError, IncompletePredictionError

UNIFIED_SIZE_DEFAULT = 124


@dataclass(frozen=True)
class LandmarkScheme:
    """One dataset's annotation convention.

    unified_ids[i] is the unified-index id of this scheme's i-th landmark.
    flip_perm[i] is the row that landmark i maps to under a horizontal mirror
    (an involution: left/right pairs swap, midline points map to themselves).
    io_pair / ip_pair optionally name the row indices used to compute the
    inter-ocular / inter-pupil normalizer distances.
    """

    name: str
    unified_ids: tuple[int, ...]
    flip_perm: tuple[int, ...]
    io_pair: tuple[int, int] | None = None
    ip_pair: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "unified_ids", tuple(int(i) for i in self.unified_ids))
        object.__setattr__(self, "flip_perm", tuple(int(i) for i in self.flip_perm))
        n = len(self.unified_ids)
        if n == 0:
            raise ConfigurationError(f"scheme {self.name!r} has no landmarks")
        if len(set(self.unified_ids)) != n:
            raise ConfigurationError(f"scheme {self.name!r} has duplicate unified ids")
        if any(i < 0 for i in self.unified_ids):
            raise ConfigurationError(f"scheme {self.name!r} has negative unified ids")
        if len(self.flip_perm) != n:
            raise ConfigurationError(
                f"scheme {self.name!r}: flip_perm length {len(self.flip_perm)} != count {n}"
            )
        if sorted(self.flip_perm) != list(range(n)):
            raise ConfigurationError(f"scheme {self.name!r}: flip_perm is not a permutation")
        if any(self.flip_perm[self.flip_perm[i]] != i for i in range(n)):
            raise ConfigurationError(f"scheme {self.name!r}: flip_perm is not an involution")
        for pair in (self.io_pair, self.ip_pair):
            if pair is not None and not all(0 <= i < n for i in pair):
                raise ConfigurationError(f"scheme {self.name!r}: normalizer pair {pair} out of range")

    @property
    def count(self) -> int:
        return len(self.unified_ids)


@dataclass
class UnifiedIndexMap:
    """The unified landmark vocabulary plus the registered schemes that map into it."""

    unified_size: int = UNIFIED_SIZE_DEFAULT
    schemes: dict[str, LandmarkScheme] = field(default_factory=dict)

    def __post_init__(self):
        if self.unified_size <= 0:
            raise ConfigurationError("unified_size must be positive")
        for scheme in list(self.schemes.values()):
            self._check(scheme)

    def _check(self, scheme: LandmarkScheme):
        bad = [i for i in scheme.unified_ids if i >= self.unified_size]
        if bad:
            raise ConfigurationError(
                f"scheme {scheme.name!r} has unified ids {bad} outside [0, {self.unified_size})"
            )

    def register(self, scheme: LandmarkScheme) -> None:
        self._check(scheme)
        self.schemes[scheme.name] = scheme

    def scheme(self, name: str) -> LandmarkScheme:
        try:
            return self.schemes[name]
        except KeyError:
            raise ConfigurationError(
                f"unknown scheme {name!r}; registered: {sorted(self.schemes)}"
            ) from None

    def to_dict(self) -> dict:
        out = {"unified_size": self.unified_size, "schemes": []}
        for s in self.schemes.values():
            rec = {
                "name": s.name,
                "unified_ids": list(s.unified_ids),
                "flip_perm": list(s.flip_perm),
            }
            if s.io_pair is not None:
                rec["io_pair"] = list(s.io_pair)
            if s.ip_pair is not None:
                rec["ip_pair"] = list(s.ip_pair)
            out["schemes"].append(rec)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "UnifiedIndexMap":
        index = cls(unified_size=int(data["unified_size"]))
        for rec in data.get("schemes", []):
            index.register(
                LandmarkScheme(
                    name=rec["name"],
                    unified_ids=tuple(rec["unified_ids"]),
                    flip_perm=tuple(rec["flip_perm"]),
                    io_pair=tuple(rec["io_pair"]) if rec.get("io_pair") else None,
                    ip_pair=tuple(rec["ip_pair"]) if rec.get("ip_pair") else None,
                )
            )
        return index

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "UnifiedIndexMap":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read scheme registry {path}: {e}") from e
        return cls.from_dict(data)


@dataclass
class GroundTruthAnnotation:
    """Per-image ground truth: normalized (count, 2) coordinates under one scheme."""

    image_id: str
    scheme_name: str
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ConfigurationError(
                f"annotation {self.image_id!r}: coords must be (count, 2), got {self.coords.shape}"
            )
        if not np.all(np.isfinite(self.coords)):
            raise ConfigurationError(f"annotation {self.image_id!r}: non-finite coordinates")

    @property
    def count(self) -> int:
        return self.coords.shape[0]


def to_unified(ann: GroundTruthAnnotation, index_map: UnifiedIndexMap) -> dict[int, tuple[float, float]]:
    """Relabel a scheme annotation as a sparse {unified_id: (x, y)} mapping."""
    scheme = index_map.scheme(ann.scheme_name)
    if ann.count != scheme.count:
        raise ConfigurationError(
            f"annotation {ann.image_id!r} has {ann.count} rows but scheme "
            f"{scheme.name!r} defines {scheme.count}"
        )
    return {uid: (float(x), float(y)) for uid, (x, y) in zip(scheme.unified_ids, ann.coords)}


def from_unified(pred: Mapping[int, tuple[float, float]], scheme: LandmarkScheme) -> np.ndarray:
    """Select a scheme's landmarks out of a unified prediction, as a (count, 2) matrix."""
    rows = np.empty((scheme.count, 2), dtype=np.float64)
    for i, uid in enumerate(scheme.unified_ids):
        if uid not in pred:
            raise IncompletePredictionError(
                f"unified id {uid} (scheme {scheme.name!r}, row {i}) missing from prediction"
            )
        rows[i] = pred[uid]
    return rows


def flip_annotation(ann: GroundTruthAnnotation, scheme: LandmarkScheme) -> GroundTruthAnnotation:
    """Horizontal mirror: x -> 1-x, then rows permuted so left/right labels swap."""
    if ann.count != scheme.count:
        raise ConfigurationError(
            f"annotation {ann.image_id!r} has {ann.count} rows, scheme expects {scheme.count}"
        )
    flipped = ann.coords.copy()
    flipped[:, 0] = 1.0 - flipped[:, 0]
    flipped = flipped[list(scheme.flip_perm)]
    return GroundTruthAnnotation(image_id=ann.image_id, scheme_name=ann.scheme_name, coords=flipped)


def save_annotations(path: str | Path, annotations: Iterable[GroundTruthAnnotation]) -> None:
    """Write annotations as JSON lines: {image_id, scheme_name, coords}."""
    with open(path, "w", encoding="utf-8") as f:
        for ann in annotations:
            rec = {
                "image_id": ann.image_id,
                "scheme_name": ann.scheme_name,
                "coords": [[float(x), float(y)] for x, y in ann.coords],
            }
            f.write(json.dumps(rec) + "\n")


def load_annotations(path: str | Path) -> list[GroundTruthAnnotation]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(
                    GroundTruthAnnotation(
                        image_id=str(rec["image_id"]),
                        scheme_name=str(rec["scheme_name"]),
                        coords=np.asarray(rec["coords"], dtype=np.float64),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as e:
                raise ConfigurationError(f"{path}:{line_no}: bad annotation record: {e}") from e
    return out
