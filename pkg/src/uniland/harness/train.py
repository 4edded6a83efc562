"""The training loop.

Batches are drawn uniformly from the pooled multi-scheme sample set, each
sample is augmented, targets are assigned to queries by set matching, and the
three-term objective is optimized with decoupled-weight-decay Adam. Every
step appends one record to the metrics log; a non-finite loss aborts the run
with a dump of the offending batch. With a fixed seed two runs produce
identical logs.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigurationError, NumericError
from ..landmarks.matching import hungarian_match
from ..landmarks.schemes import UnifiedIndexMap
from ..losses import BatchGating, total_loss
from ..model.checkpoint import save_checkpoint
from ..model.network import UnifiedLandmarkModel
from .augment import augment
from .config import TrainConfig
from .data import LandmarkDataset, images_to_tensor
from .evaluate import mean_unit_nme

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    steps: int
    metrics_path: Path
    final_checkpoint: Path
    best_checkpoint: Path | None
    best_val_nme: float | None
    final_losses: dict


def run_training(config: TrainConfig, out_dir: str | Path) -> TrainResult:
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "train_config.json")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    registry = UnifiedIndexMap.load(config.registry_path)
    if registry.unified_size != config.model.unified_size:
        raise ConfigurationError(
            f"registry unified size {registry.unified_size} != model "
            f"unified size {config.model.unified_size}"
        )
    dataset = LandmarkDataset(registry, config.mixture, config.image_dir)
    val_dataset = (
        LandmarkDataset(registry, config.val_mixture, config.image_dir)
        if config.val_mixture
        else None
    )

    model = UnifiedLandmarkModel(config.model)
    model.train()
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )

    steps_per_epoch = math.ceil(len(dataset) / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)

    metrics_path = out / "metrics.jsonl"
    best_path = out / "checkpoint_best.npz"
    final_path = out / "checkpoint_final.npz"
    best_val: float | None = None
    have_best = False
    order = np.empty(0, dtype=np.int64)
    cursor = 0
    final_losses: dict = {}

    with open(metrics_path, "w", encoding="utf-8") as metrics_file:
        for step in range(1, total_steps + 1):
            if cursor >= len(order):
                order = rng.permutation(len(dataset))
                cursor = 0
            batch_idx = order[cursor : cursor + config.batch_size]
            cursor += len(batch_idx)
            batch = [dataset[int(i)] for i in batch_idx]

            images = []
            annotations = []
            for sample in batch:
                image, ann = augment(
                    sample.image, sample.annotation, sample.scheme, config.augmentation, rng
                )
                images.append(image)
                annotations.append(ann)
            inputs = images_to_tensor(images)

            output = model(inputs)
            logits_np = output.index_logits.detach().double().cpu().numpy()
            coords_np = output.coords.detach().double().cpu().numpy()
            matches = []
            target_coords = []
            target_ids = []
            for b, (sample, ann) in enumerate(zip(batch, annotations)):
                ids = list(sample.scheme.unified_ids)
                matches.append(hungarian_match(logits_np[b], coords_np[b], ids, ann.coords))
                target_coords.append(ann.coords)
                target_ids.append(ids)

            scheme_names = tuple(s.scheme.name for s in batch)
            gatings = [BatchGating(g.distribution, scheme_names) for g in output.gates]
            values = total_loss(
                output.coords,
                output.index_logits,
                matches,
                target_coords,
                target_ids,
                gatings,
                weights=config.loss_weights,
                pa_mode=config.pa_mode,
                no_landmark_weight=config.no_landmark_weight,
            )

            record = {"step": step, **values.detached()}
            if not all(math.isfinite(v) for v in values.detached().values()):
                dump = {
                    "step": step,
                    "image_ids": [s.annotation.image_id for s in batch],
                    "schemes": list(scheme_names),
                    "losses": values.detached(),
                }
                dump_path = out / "failure_dump.json"
                dump_path.write_text(json.dumps(dump, indent=2) + "\n", encoding="utf-8")
                raise NumericError(f"non-finite loss at step {step}; batch dumped to {dump_path}")

            optimizer.zero_grad()
            values.total.backward()
            optimizer.step()
            metrics_file.write(json.dumps(record) + "\n")
            final_losses = record

            if val_dataset is not None and (
                step % config.eval_every == 0 or step == total_steps
            ):
                val_nme = mean_unit_nme(model, val_dataset.samples)
                model.train()
                if best_val is None or val_nme < best_val:
                    best_val = val_nme
                    save_checkpoint(best_path, model, extra={"step": step, "val_nme": val_nme})
                    have_best = True
                log.info("step %d val nme %.5f (best %.5f)", step, val_nme, best_val)

    save_checkpoint(final_path, model, extra={"step": total_steps})
    return TrainResult(
        steps=total_steps,
        metrics_path=metrics_path,
        final_checkpoint=final_path,
        best_checkpoint=best_path if have_best else None,
        best_val_nme=best_val,
        final_losses=final_losses,
    )
