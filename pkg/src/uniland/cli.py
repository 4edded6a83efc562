"""Command line interface.

Subcommands: synth-data (generate a synthetic dataset), train (run training),
eval (metrics for one scheme), diagnose (expert-usage report and plots).
Every subcommand takes a JSON config path plus --seed and --out-dir; eval
adds --scheme, --norm, and --fr-threshold. Package errors exit nonzero with a
one-line message.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import UnilandError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uniland",
        description="Unified facial landmark detection: data synthesis, training, "
        "evaluation, and expert diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth-data", help="generate a synthetic landmark dataset")
    _common(p_synth)

    p_train = sub.add_parser("train", help="train a model from a training config")
    _common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on one scheme")
    _common(p_eval)
    p_eval.add_argument("--scheme", help="scheme to evaluate (default: sole annotations entry)")
    p_eval.add_argument(
        "--norm",
        choices=["io", "ip", "box"],
        default="io",
        help="normalizer kind (default io)",
    )
    p_eval.add_argument(
        "--fr-threshold",
        type=float,
        default=0.10,
        help="failure-rate threshold (default 0.10)",
    )
    p_eval.add_argument(
        "--oracle",
        action="store_true",
        help="inject ground truth as predictions (pins the metric zero point)",
    )

    p_diag = sub.add_parser("diagnose", help="expert-usage report and plots")
    _common(p_diag)
    return parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="path to the JSON config for this command")
    p.add_argument("--seed", type=int, default=None, help="random seed override")
    p.add_argument("--out-dir", required=True, help="directory for outputs")


def _cmd_synth(args) -> int:
    from .harness.synth import SynthConfig, synth_dataset

    config = SynthConfig.load(args.config)
    seed = 0 if args.seed is None else args.seed
    result = synth_dataset(config, args.out_dir, seed=seed)
    print(f"registry: {result.registry_path}")
    print(f"images:   {result.image_dir}")
    for name, path in sorted(result.annotation_paths.items()):
        print(f"{name}: {result.counts[name]} annotations -> {path}")
    return 0


def _cmd_train(args) -> int:
    from .harness.config import TrainConfig
    from .harness.train import run_training

    config = TrainConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    result = run_training(config, args.out_dir)
    print(f"steps:            {result.steps}")
    print(f"metrics log:      {result.metrics_path}")
    print(f"final checkpoint: {result.final_checkpoint}")
    if result.best_checkpoint is not None:
        print(f"best checkpoint:  {result.best_checkpoint} (val nme {result.best_val_nme:.5f})")
    for key, value in result.final_losses.items():
        if key != "step":
            print(f"final {key}: {value:.6f}")
    return 0


def _cmd_eval(args) -> int:
    from .harness.config import ArtifactConfig
    from .harness.evaluate import evaluate_dataset
    from .landmarks.schemes import UnifiedIndexMap
    from .model.checkpoint import build_from_checkpoint

    config = ArtifactConfig.load(args.config)
    config.validate()
    scheme = args.scheme
    if scheme is None:
        if len(config.annotations) != 1:
            raise UnilandError(
                f"--scheme is required when the config lists several annotation files "
                f"({sorted(config.annotations)})"
            )
        scheme = next(iter(config.annotations))
    if scheme not in config.annotations:
        raise UnilandError(f"no annotation file for scheme {scheme!r} in {sorted(config.annotations)}")

    model, _ = build_from_checkpoint(config.checkpoint)
    registry = UnifiedIndexMap.load(config.registry_path)
    report = evaluate_dataset(
        model,
        registry,
        scheme,
        config.annotations[scheme],
        config.image_dir,
        norm_kind=args.norm,
        fr_threshold=args.fr_threshold,
        oracle=args.oracle,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / f"eval_report_{scheme}.json"
    report.save(report_path)
    print(f"scheme:         {report.scheme}")
    print(f"images:         {report.count}")
    print(f"nme ({report.norm_kind}): {report.nme_mean:.6f}")
    print(f"failure rate:   {report.failure_rate:.4f} (threshold {report.fr_threshold})")
    print(f"index accuracy: {report.index_accuracy:.4f}")
    print(f"report:         {report_path}")
    return 0


def _cmd_diagnose(args) -> int:
    from .harness.config import ArtifactConfig
    from .harness.diagnose import diagnose_experts
    from .landmarks.schemes import UnifiedIndexMap
    from .model.checkpoint import build_from_checkpoint

    config = ArtifactConfig.load(args.config)
    config.validate()
    model, _ = build_from_checkpoint(config.checkpoint)
    registry = UnifiedIndexMap.load(config.registry_path)
    report = diagnose_experts(
        model, registry, config.annotations, config.image_dir, args.out_dir
    )
    print(f"datasets: {', '.join(report.datasets)}")
    for name in report.datasets:
        print(f"{name}: {report.sample_counts[name]} samples")
    print(f"report: {Path(args.out_dir) / 'expert_usage.json'}")
    return 0


COMMANDS = {
    "synth-data": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "diagnose": _cmd_diagnose,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and args.seed < 0:
        print(f"error: seed must be >= 0, got {args.seed}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except UnilandError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
