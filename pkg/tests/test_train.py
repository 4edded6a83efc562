"""Tests for the training loop: logging, determinism, abort handling, checkpoints."""
import json

import numpy as np
import pytest
import torch

from uniland.errors import ConfigurationError, NumericError
from uniland.harness import train as train_module
from uniland.harness.config import TrainConfig
from uniland.harness.train import run_training
from uniland.losses import LossValues
from uniland.model.checkpoint import load_checkpoint

from conftest import make_synth, make_train_config, tiny_model_config


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    return make_synth(tmp_path_factory.mktemp("synthdata"), n_images=8)


def read_metrics(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]


class TestMetricsLog:
    def test_single_step_record_shape(self, data, tmp_path):
        config = make_train_config(data, max_steps=1)
        result = run_training(config, tmp_path / "run")
        records = read_metrics(result.metrics_path)
        assert len(records) == 1
        assert set(records[0]) == {"step", "coord_loss", "index_loss", "pa_loss", "total"}
        assert records[0]["step"] == 1
        assert all(np.isfinite(v) for v in records[0].values())

    def test_step_counter_is_contiguous(self, data, tmp_path):
        config = make_train_config(data, max_steps=4)
        result = run_training(config, tmp_path / "run")
        records = read_metrics(result.metrics_path)
        assert [r["step"] for r in records] == [1, 2, 3, 4]
        assert result.steps == 4
        assert result.final_losses == records[-1]

    def test_epoch_count_limits_steps(self, data, tmp_path):
        # 8 images at batch 4 is 2 steps per epoch.
        config = make_train_config(data, epochs=3, max_steps=None)
        result = run_training(config, tmp_path / "run")
        assert result.steps == 6

    def test_total_is_weighted_sum_in_log(self, data, tmp_path):
        config = make_train_config(data, max_steps=2)
        result = run_training(config, tmp_path / "run")
        w = config.loss_weights
        for r in read_metrics(result.metrics_path):
            expected = w.coord * r["coord_loss"] + w.index * r["index_loss"] + w.prototype * r["pa_loss"]
            assert abs(r["total"] - expected) < 1e-5


class TestDeterminism:
    def test_same_seed_gives_identical_logs(self, data, tmp_path):
        config_a = make_train_config(data, max_steps=4)
        config_b = make_train_config(data, max_steps=4)
        a = run_training(config_a, tmp_path / "a")
        b = run_training(config_b, tmp_path / "b")
        assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes()

    def test_different_seed_gives_different_logs(self, data, tmp_path):
        a = run_training(make_train_config(data, max_steps=4, seed=1), tmp_path / "a")
        b = run_training(make_train_config(data, max_steps=4, seed=2), tmp_path / "b")
        assert a.metrics_path.read_bytes() != b.metrics_path.read_bytes()


class TestOptimization:
    def test_loss_decreases_on_small_problem(self, data, tmp_path):
        config = make_train_config(data, max_steps=60, learning_rate=1e-3)
        result = run_training(config, tmp_path / "run")
        totals = [r["total"] for r in read_metrics(result.metrics_path)]
        assert np.mean(totals[-10:]) < np.mean(totals[:10])

    def test_alignment_pressure_pulls_gatings_together(self, tmp_path):
        # Two schemes per batch: with a strong alignment weight the logged
        # alignment loss must trend down across the first 200 steps. A trend
        # over windows, not a pointwise bound; single steps are noisy.
        from uniland.losses import LossWeights

        mixed = make_synth(tmp_path / "data", n_images=16, assign="all", seed=41)
        config = make_train_config(
            mixed,
            batch_size=8,
            learning_rate=1e-3,
            max_steps=200,
            epochs=200,
            seed=5,
            loss_weights=LossWeights(coord=1.0, index=5.0, prototype=1.0),
        )
        result = run_training(config, tmp_path / "run")
        pa = [r["pa_loss"] for r in read_metrics(result.metrics_path)]
        assert len(pa) == 200
        assert np.mean(pa[-40:]) < np.mean(pa[:40])


class TestFailureDump:
    def test_non_finite_loss_aborts_with_dump(self, data, tmp_path, monkeypatch):
        real = train_module.total_loss

        def poisoned(*args, **kwargs):
            values = real(*args, **kwargs)
            nan = values.total * float("nan")
            return LossValues(coord=values.coord, index=values.index,
                              prototype=values.prototype, total=nan)

        monkeypatch.setattr(train_module, "total_loss", poisoned)
        config = make_train_config(data, max_steps=3)
        out = tmp_path / "run"
        with pytest.raises(NumericError, match="non-finite"):
            run_training(config, out)
        dump = json.loads((out / "failure_dump.json").read_text(encoding="utf-8"))
        assert dump["step"] == 1
        assert len(dump["image_ids"]) == config.batch_size
        assert len(dump["schemes"]) == config.batch_size
        assert not np.isfinite(dump["losses"]["total"])


class TestValidationCheckpoints:
    def test_best_checkpoint_written_with_val_mixture(self, data, tmp_path):
        config = make_train_config(
            data,
            max_steps=4,
            eval_every=2,
            val_mixture={name: str(path) for name, path in data.annotation_paths.items()},
        )
        result = run_training(config, tmp_path / "run")
        assert result.best_checkpoint is not None
        assert result.best_val_nme is not None and np.isfinite(result.best_val_nme)
        meta, _ = load_checkpoint(result.best_checkpoint)
        assert set(meta["extra"]) == {"step", "val_nme"}
        assert meta["extra"]["val_nme"] == pytest.approx(result.best_val_nme, abs=1e-9)

    def test_no_val_mixture_means_no_best_checkpoint(self, data, tmp_path):
        config = make_train_config(data, max_steps=2)
        result = run_training(config, tmp_path / "run")
        assert result.best_checkpoint is None
        assert result.best_val_nme is None
        assert result.final_checkpoint.exists()

    def test_final_checkpoint_records_step(self, data, tmp_path):
        config = make_train_config(data, max_steps=3)
        result = run_training(config, tmp_path / "run")
        meta, _ = load_checkpoint(result.final_checkpoint)
        assert meta["extra"] == {"step": 3}

    def test_train_config_snapshot_saved(self, data, tmp_path):
        config = make_train_config(data, max_steps=1)
        run_training(config, tmp_path / "run")
        snapshot = json.loads((tmp_path / "run" / "train_config.json").read_text(encoding="utf-8"))
        assert snapshot["seed"] == config.seed
        assert snapshot["max_steps"] == 1


class TestTrainConfigValidation:
    def test_pa_needs_batch_of_two(self, data):
        config = make_train_config(data, batch_size=1)
        with pytest.raises(ConfigurationError, match="batch"):
            config.validate()

    def test_batch_of_one_allowed_without_pa_term(self, data):
        from uniland.losses import LossWeights

        config = make_train_config(
            data, batch_size=1, loss_weights=LossWeights(coord=1.0, index=5.0, prototype=0.0)
        )
        config.validate()

    def test_learning_rate_positive(self, data):
        config = make_train_config(data, learning_rate=0.0)
        with pytest.raises(ConfigurationError):
            config.validate()

    def test_registry_and_model_sizes_must_agree(self, data, tmp_path):
        config = make_train_config(data, model=tiny_model_config(unified_size=32), max_steps=1)
        with pytest.raises(ConfigurationError, match="unified size"):
            run_training(config, tmp_path / "run")

    def test_roundtrip_through_json(self, data, tmp_path):
        config = make_train_config(data, max_steps=7)
        path = tmp_path / "train.json"
        config.save(path)
        loaded = TrainConfig.load(path)
        assert loaded.max_steps == 7
        assert loaded.model.to_dict() == config.model.to_dict()
        assert loaded.mixture == config.mixture
