#!/usr/bin/env python3
"""
Training runner.

Trains a deblurring model on the train split of a paired dataset and writes
the checkpoint, the loss log (CSV) and the loss curve.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Optional

# Add project root to Python path
project_root = Path(__file__).resolve().parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from src import config  # noqa: E402
from src.data.dataset import PairDataset  # noqa: E402
from src.exceptions import ConfigError, TrainingDivergedError, UsageError  # noqa: E402
from src.model.blocks import param_bytes, param_count  # noqa: E402
from src.model.factory import build_model, size_constraints  # noqa: E402
from src.training.checkpoint import Checkpoint, load_checkpoint, restore_model  # noqa: E402
from src.training.trainer import TrainConfig, fit  # noqa: E402
from src.utils.cli import (  # noqa: E402
    EXIT_FAILURE,
    EXIT_OK,
    add_common_arguments,
    add_model_arguments,
    configure_logging,
    execute,
    load_file_config,
    model_spec_from_args,
    option,
    profile_of,
)

DEFAULT_CHECKPOINT = os.path.join(config.RUNS_DIR, "model.ckpt")


def add_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="Dataset root (uses its train split)")
    add_model_arguments(parser)
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int, help="Epochs (default from profile)")
    group.add_argument("--batch", type=int, help="Batch size (default from profile)")
    group.add_argument("--crop", type=int, help="Random crop size (default from profile)")
    group.add_argument("--lr", type=float, help="Initial learning rate (default from profile)")
    group.add_argument("--decay-rate", type=float, help="Learning-rate decay factor (default 0.1)")
    group.add_argument("--max-steps", type=int, help="Stop after this many steps (desk profile: 200)")
    group.add_argument("--checkpoint-every", type=int, help="Epochs between checkpoints (default 1)")
    group.add_argument("--out", type=str, help=f"Checkpoint path (default: {DEFAULT_CHECKPOINT})")
    group.add_argument("--log-dir", type=str, help="Directory for loss_log.csv and loss_curve.png "
                                                   "(default: next to the checkpoint)")
    group.add_argument("--resume", type=str, help="Continue from this checkpoint")
    add_common_arguments(parser)


TRAIN_OPTIONS = {
    "batch_size": "batch",
    "crop": "crop",
    "lr0": "lr",
    "decay_rate": "decay_rate",
    "epochs": "epochs",
    "checkpoint_every": "checkpoint_every",
}


def train_config_from_args(args: argparse.Namespace, file_config, seed: int, dtype: str,
                           checkpoint_path: str) -> TrainConfig:
    profile = profile_of(args, file_config)
    name = option(args, "profile", file_config, None, config.DEFAULT_PROFILE)
    overrides = {field: option(args, flag, file_config) for field, flag in TRAIN_OPTIONS.items()}
    overrides.update(seed=seed, dtype=dtype, checkpoint_path=checkpoint_path)
    max_steps = option(args, "max_steps", file_config, profile)
    try:
        train_config = TrainConfig.from_profile(name, **overrides)
    except (ConfigError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    train_config.max_steps = max_steps
    return train_config


def resumed_train_config(args: argparse.Namespace, file_config, resume: Checkpoint,
                         checkpoint_path: Optional[str]) -> TrainConfig:
    """The checkpoint's training options; only flags and config-file values given explicitly override them."""
    if not resume.train_config:
        raise UsageError(f"checkpoint {args.resume} holds no training options and cannot be resumed")
    values = resume.train_config.copy()
    for field, flag in TRAIN_OPTIONS.items():
        value = option(args, flag, file_config)
        if value is not None:
            values[field] = value
    max_steps = option(args, "max_steps", file_config)
    if max_steps is not None:
        values["max_steps"] = max_steps
    values["checkpoint_path"] = checkpoint_path or values.get("checkpoint_path") or args.resume
    try:
        return TrainConfig.from_dict(values)
    except TypeError as exc:
        raise UsageError(str(exc)) from None


def run(args: argparse.Namespace) -> int:
    file_config = load_file_config(args)
    checkpoint_path = option(args, "out", file_config)
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        spec = resume.model_spec
        model = restore_model(resume)
        train_config = resumed_train_config(args, file_config, resume, checkpoint_path)
    else:
        spec = model_spec_from_args(args, file_config)
        model = build_model(spec)
        train_config = train_config_from_args(args, file_config, spec.seed, spec.dtype,
                                              checkpoint_path or DEFAULT_CHECKPOINT)
    checkpoint_path = train_config.checkpoint_path
    try:
        train_config.validate(size_constraints(model)[0])
    except ConfigError as exc:
        raise UsageError(str(exc)) from None

    dataset = PairDataset.from_dir(args.data, "train")
    print(f"Training {spec.label} on {len(dataset)} pairs")
    print("=" * 50)
    print(f"  parameters: {param_count(model):,} ({param_bytes(model) / config.BYTES_PER_MB:.1f} MB)")
    print(f"  batch {train_config.batch_size}, crop {train_config.crop}, lr {train_config.lr0:g}, "
          f"epochs {train_config.epochs}, max steps {train_config.max_steps}")

    try:
        report = fit(model, dataset, train_config, spec, resume=resume)
    except TrainingDivergedError as exc:
        print(f"❌ Training diverged at step {exc.step}: {exc}", file=sys.stderr)
        if exc.last_checkpoint:
            print(f"   last good checkpoint: {exc.last_checkpoint}", file=sys.stderr)
        return EXIT_FAILURE

    log_dir = option(args, "log_dir", file_config, None, os.path.dirname(os.path.abspath(checkpoint_path)))
    artifacts = report.save(log_dir)
    print("\nTraining Results:")
    print("-" * 30)
    print(f"  steps: {report.steps}")
    print(f"  epochs completed: {report.epochs_completed}")
    if report.steps:
        print(f"  initial loss: {report.initial_loss:.6f}")
        print(f"  final smoothed loss: {report.final_loss:.6f}")
    print(f"  wall clock: {report.seconds:.1f} s")
    print(f"  checkpoint: {report.checkpoint_path}")
    for name, path in artifacts.items():
        print(f"  {name}: {path}")
    print("\n✅ Training finished successfully!")
    return EXIT_OK


def main(argv=None) -> int:
    """Main entry point."""
    parser = argparse.ArgumentParser(description="Train a deblurring model")
    add_arguments(parser)
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    return execute(run, args, parser)


if __name__ == "__main__":
    sys.exit(main())
