"""Expert-usage diagnostics.

For every dataset the mean routing distribution is collected over its
samples; subtracting the global mean over all samples yields mean-centered
usage vectors whose entries show which experts a dataset over- or
under-recruits relative to the shared baseline. Each row of the centered
matrix sums to zero because every distribution sums to one. Per-sample
gating vectors are the mean of the per-scale routing distributions.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ConfigurationError
from ..landmarks.schemes import UnifiedIndexMap, load_annotations
from ..model.network import UnifiedLandmarkModel
from .data import images_to_tensor, load_image

log = logging.getLogger(__name__)


@dataclass
class ExpertUsageReport:
    expert_count: int
    datasets: list[str]
    mean_gating: dict[str, list[float]]
    normalized: dict[str, list[float]]
    activation_counts: dict[str, list[int]]
    sample_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "expert_count": self.expert_count,
            "datasets": self.datasets,
            "mean_gating": self.mean_gating,
            "normalized": self.normalized,
            "activation_counts": self.activation_counts,
            "sample_counts": self.sample_counts,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def collect_gating(
    model: UnifiedLandmarkModel,
    registry: UnifiedIndexMap,
    annotations_path: str | Path,
    image_dir: str | Path,
    batch_size: int = 16,
) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Per-sample scale-mean gating vectors plus per-expert selection counts."""
    import torch

    image_dir = Path(image_dir)
    annotations = load_annotations(annotations_path)
    n_experts = model.config.expert_count
    vectors = []
    ids = []
    counts = np.zeros(n_experts, dtype=np.int64)
    model.eval()
    for start in range(0, len(annotations), batch_size):
        chunk = annotations[start : start + batch_size]
        images = images_to_tensor([load_image(image_dir / f"{a.image_id}.png") for a in chunk])
        with torch.no_grad():
            output = model(images)
        if not output.gates:
            raise ConfigurationError("model has adaptive extraction disabled; nothing to diagnose")
        per_scale = np.stack(
            [g.distribution.double().cpu().numpy() for g in output.gates]
        )  # (scales, B, N)
        vectors.append(per_scale.mean(axis=0))
        for g in output.gates:
            counts += np.bincount(
                g.indices.cpu().numpy().reshape(-1), minlength=n_experts
            )
        ids.extend(a.image_id for a in chunk)
    gating = np.concatenate(vectors, axis=0) if vectors else np.zeros((0, n_experts))
    return ids, gating, counts


def diagnose_experts(
    model: UnifiedLandmarkModel,
    registry: UnifiedIndexMap,
    mixture: Mapping[str, str | Path],
    image_dir: str | Path,
    out_dir: str | Path,
    batch_size: int = 16,
) -> ExpertUsageReport:
    """Build the usage report and emit one bar chart per dataset plus the
    per-sample gating vector file for downstream 2-D embedding."""
    if not model.config.use_ape:
        raise ConfigurationError("model has adaptive extraction disabled; nothing to diagnose")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    per_dataset: dict[str, np.ndarray] = {}
    per_counts: dict[str, np.ndarray] = {}
    rows = []
    for name in sorted(mixture):
        registry.scheme(name)
        ids, gating, counts = collect_gating(
            model, registry, mixture[name], image_dir, batch_size=batch_size
        )
        if gating.shape[0] == 0:
            log.warning("dataset %r has no samples; skipped", name)
            continue
        per_dataset[name] = gating
        per_counts[name] = counts
        rows.extend(
            {"image_id": i, "dataset": name, "gating": [float(v) for v in vec]}
            for i, vec in zip(ids, gating)
        )
    if not per_dataset:
        raise ConfigurationError("every dataset in the mixture is empty")

    pooled = np.concatenate(list(per_dataset.values()), axis=0)
    global_mean = pooled.mean(axis=0)
    datasets = sorted(per_dataset)
    mean_gating = {name: per_dataset[name].mean(axis=0) for name in datasets}
    normalized = {name: mean_gating[name] - global_mean for name in datasets}

    embed_path = out / "embedding_inputs.jsonl"
    with open(embed_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    for name in datasets:
        _plot_usage(normalized[name], name, out / f"expert_usage_{name}.png")

    report = ExpertUsageReport(
        expert_count=model.config.expert_count,
        datasets=datasets,
        mean_gating={k: [float(x) for x in v] for k, v in mean_gating.items()},
        normalized={k: [float(x) for x in v] for k, v in normalized.items()},
        activation_counts={k: [int(x) for x in per_counts[k]] for k in datasets},
        sample_counts={k: int(per_dataset[k].shape[0]) for k in datasets},
    )
    report.save(out / "expert_usage.json")
    return report


def _plot_usage(values: np.ndarray, name: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3))
    x = np.arange(len(values))
    colors = ["tab:blue" if v >= 0 else "tab:red" for v in values]
    ax.bar(x, values, color=colors)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("expert")
    ax.set_ylabel("mean-centered gate weight")
    ax.set_title(f"expert usage: {name}")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
