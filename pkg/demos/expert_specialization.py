"""Watch the routing layer organize itself during training.

Trains the tiny model on two annotation schemes and reports three things:
the alignment-loss trajectory (same-dataset routing pairs are pulled
together, so the term should fall), the per-scheme mean routing distribution
over experts, and the within- and between-scheme routing agreement.

The two toy schemes annotate faces drawn from the same generator, and the
router only sees pixels. Identical-looking datasets therefore converge onto
the same shared experts instead of fragmenting by annotation convention,
which is the pooling behavior unified training wants; expert specialization
tracks appearance, not labels.

Runs in about a minute on CPU. Artifacts land in runs/expert_demo.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from uniland.harness.config import TrainConfig
from uniland.harness.diagnose import collect_gating
from uniland.harness.synth import SynthConfig, synth_dataset
from uniland.harness.train import run_training
from uniland.landmarks.schemes import UnifiedIndexMap
from uniland.losses import LossWeights
from uniland.model.checkpoint import build_from_checkpoint
from uniland.model.config import ModelConfig

OUT = Path("runs/expert_demo")
STEPS = 400


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))


def mean_within_cosine(rows: np.ndarray) -> float:
    n = rows.shape[0]
    vals = [cosine(rows[i], rows[j]) for i in range(n) for j in range(i + 1, n)]
    return float(np.mean(vals))


def main() -> int:
    data = synth_dataset(SynthConfig(n_images=64), OUT / "data", seed=7)
    model_config = ModelConfig(
        backbone="tiny", expert_count=4, topk=2, token_channels=32,
        encoder_depth=2, encoder_heads=4, decoder_depth=2, decoder_heads=4,
        query_count=12, unified_size=16,
    )
    config = TrainConfig(
        registry_path=str(data.registry_path),
        image_dir=str(data.image_dir),
        mixture={k: str(v) for k, v in data.annotation_paths.items()},
        model=model_config,
        max_steps=STEPS,
        epochs=STEPS,
        learning_rate=1e-3,
        seed=0,
        loss_weights=LossWeights(coord=1.0, index=5.0, prototype=1.0),
    )
    print(f"training {STEPS} steps on {sum(data.counts.values())} annotations ...")
    result = run_training(config, OUT / "run")
    model, _ = build_from_checkpoint(result.final_checkpoint)
    registry = UnifiedIndexMap.load(data.registry_path)

    pa = [json.loads(line)["pa_loss"] for line in open(result.metrics_path)]
    head, tail = float(np.mean(pa[:40])), float(np.mean(pa[-40:]))
    print(f"\nalignment loss, mean of first 40 steps: {head:.6f}")
    print(f"alignment loss, mean of last 40 steps:  {tail:.6f}"
          f"  ({'tightened' if tail < head else 'did not tighten'})")

    centroids = {}
    print(f"\nper-scheme routing over {model_config.expert_count} experts:")
    for name, path in sorted(data.annotation_paths.items()):
        _, gating, counts = collect_gating(model, registry, path, data.image_dir)
        centroid = gating.mean(axis=0)
        centroids[name] = centroid
        row = "  ".join(f"{v:.3f}" for v in centroid)
        print(f"  {name}: mean gates [{row}]  TopK hits {counts.tolist()}")
        print(f"        within-scheme agreement (mean pairwise cosine): "
              f"{mean_within_cosine(gating):.4f}")

    names = sorted(centroids)
    between = cosine(centroids[names[0]], centroids[names[1]])
    print(f"\nbetween-scheme centroid cosine: {between:.4f}")
    print("both schemes draw the same kind of face, so a high between-scheme")
    print("overlap is the intended outcome: the router pools look-alike data")
    print("onto shared experts rather than splitting it by annotation scheme.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
