"""
Training: Adam, learning-rate schedule, the training loop and checkpoints.
"""

from src.training.checkpoint import (
    Checkpoint,
    checkpoint_from_model,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from src.training.optim import AdamState, adam_step, lr_at
from src.training.trainer import TrainConfig, TrainingReport, fit, prepare_batch

__all__ = [
    "Checkpoint", "checkpoint_from_model", "load_checkpoint", "restore_model", "save_checkpoint",
    "AdamState", "adam_step", "lr_at",
    "TrainConfig", "TrainingReport", "fit", "prepare_batch",
]
