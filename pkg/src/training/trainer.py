"""
Training loop: random crops, Adam updates, step learning-rate decay,
checkpoints that can resume inside an epoch, and a loss report.

One generator, seeded from the config, draws both the epoch permutations and
the crop windows; its state is saved in every checkpoint, which makes a
resumed run identical to an uninterrupted one.
"""

import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src import config  # noqa: E402
from src.data.dataset import ImagePair  # noqa: E402
from src.exceptions import ConfigError, ShapeError, TrainingDivergedError  # noqa: E402
from src.model.factory import Model, ModelSpec, model_loss, run_model, size_constraints  # noqa: E402
from src.tensor import GradTape, Tensor  # noqa: E402
from src.training.checkpoint import Checkpoint, checkpoint_from_model, save_checkpoint  # noqa: E402
from src.training.optim import AdamState, adam_step, lr_at  # noqa: E402

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Training options.

    Attributes:
        batch_size: Pairs per step
        crop: Side of the square random crop
        lr0: Initial learning rate
        decay_rate: Factor applied at 1/3 and 2/3 of the epochs
        epochs: Number of passes over the dataset
        seed: Seed of the shuffling / cropping generator
        dtype: "f32" or "f64"
        max_steps: Stop after this many steps (None for no limit)
        checkpoint_path: Where checkpoints are written (None to skip)
        checkpoint_every: Epochs between checkpoints
        log_every: Steps between progress log lines
    """

    batch_size: int = 4
    crop: int = 64
    lr0: float = 5e-4
    decay_rate: float = 0.1
    epochs: int = 30
    seed: int = config.DEFAULT_SEED
    dtype: str = config.DEFAULT_DTYPE
    max_steps: Optional[int] = None
    checkpoint_path: Optional[str] = None
    checkpoint_every: int = 1
    log_every: int = 10

    @classmethod
    def from_profile(cls, name: str, **overrides: Any) -> "TrainConfig":
        if name not in config.PROFILES:
            raise ConfigError(f"unknown profile '{name}', expected one of {', '.join(config.PROFILES)}")
        profile = config.PROFILES[name]
        values = {"batch_size": profile["batch"], "crop": profile["crop"], "lr0": profile["lr"],
                  "decay_rate": profile["decay_rate"], "epochs": profile["epochs"],
                  "max_steps": profile["max_steps"]}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def validate(self, multiple: Tuple[int, int] = (1, 1)) -> "TrainConfig":
        """Check that all values are positive and the crop fits the model's divisibility."""
        for name in ("batch_size", "crop", "epochs", "checkpoint_every", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr0 < 0 or not 0 < self.decay_rate <= 1:
            raise ConfigError(f"invalid learning rate {self.lr0} / decay {self.decay_rate}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError(f"max_steps must be >= 0, got {self.max_steps}")
        mh, mw = multiple
        if self.crop % mh or self.crop % mw:
            raise ConfigError(f"crop {self.crop} must be divisible by {mh}x{mw} for this model")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def normalize(image: np.ndarray) -> np.ndarray:
    """[0, 1] -> [-0.5, 0.5]."""
    return image - 0.5


def prepare_batch(samples: Sequence[ImagePair], train_config: TrainConfig,
                  rng: np.random.Generator) -> Tuple[Tensor, Tensor]:
    """Crop the same random window from the blurry and sharp image of every pair and normalize.

    Returns:
        (blurry, sharp) tensors of shape (len(samples), 3, crop, crop)

    Raises:
        ShapeError: If an image is smaller than the crop
    """
    crop = train_config.crop
    blurry, sharp = [], []
    for sample in samples:
        _, h, w = sample.blurry.shape
        if h < crop or w < crop:
            raise ShapeError(f"image {sample.name} is {h}x{w}, smaller than the {crop}x{crop} crop")
        top = int(rng.integers(0, h - crop + 1))
        left = int(rng.integers(0, w - crop + 1))
        blurry.append(sample.blurry[:, top:top + crop, left:left + crop])
        sharp.append(sample.sharp[:, top:top + crop, left:left + crop])
    return (Tensor(normalize(np.stack(blurry)), dtype=train_config.dtype),
            Tensor(normalize(np.stack(sharp)), dtype=train_config.dtype))


@dataclass
class TrainingReport:
    """Per-step log and summary of a training run."""

    log: pd.DataFrame
    steps: int
    epochs_completed: int
    checkpoint_path: Optional[str] = None
    seconds: float = 0.0
    artifacts: Dict[str, str] = field(default_factory=dict)

    def smoothed(self, window: int = config.LOSS_SMOOTHING_WINDOW) -> pd.Series:
        return self.log["loss"].rolling(window, min_periods=1).mean()

    @property
    def initial_loss(self) -> float:
        return float(self.log["loss"].head(config.LOSS_SMOOTHING_WINDOW).mean())

    @property
    def final_loss(self) -> float:
        return float(self.log["loss"].tail(config.LOSS_SMOOTHING_WINDOW).mean())

    def save(self, out_dir: str) -> Dict[str, str]:
        """Write the loss CSV and the loss-curve figure."""
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "loss_log.csv")
        self.log.to_csv(csv_path, index=False)
        self.artifacts["loss_log"] = csv_path
        if len(self.log):
            fig, ax = plt.subplots(figsize=(8, 4))
            ax.plot(self.log["step"], self.log["loss"], alpha=0.4, label="loss")
            ax.plot(self.log["step"], self.smoothed(), label=f"smoothed ({config.LOSS_SMOOTHING_WINDOW})")
            ax.set_xlabel("step")
            ax.set_ylabel("loss")
            ax.set_yscale("log")
            ax.legend()
            fig.tight_layout()
            figure_path = os.path.join(out_dir, "loss_curve.png")
            fig.savefig(figure_path, dpi=100)
            plt.close(fig)
            self.artifacts["loss_curve"] = figure_path
        return self.artifacts


def _reached(step: int, max_steps: Optional[int]) -> bool:
    return max_steps is not None and step >= max_steps


def fit(model: Model, dataset: Sequence[ImagePair], train_config: TrainConfig, spec: ModelSpec,
        resume: Optional[Checkpoint] = None) -> TrainingReport:
    """Train a model in place.

    Single models use the level-1 loss, stacks the summed per-sub-model loss.
    A checkpoint is written every ``checkpoint_every`` epochs and when the run
    stops. A run stopped inside an epoch stores that epoch's order and the
    position reached, so resuming replays the rest of the epoch.

    Args:
        model: Model to train
        dataset: Non-empty sequence of ImagePairs
        train_config: Training options
        spec: Description of the model, stored in checkpoints
        resume: Checkpoint to continue from

    Returns:
        TrainingReport with one row per step

    Raises:
        TrainingDivergedError: If the loss becomes NaN or Inf
    """
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    train_config.validate(size_constraints(model)[0])
    n = len(dataset)
    rng = np.random.default_rng(train_config.seed)
    named = model.named_parameters()
    state = AdamState.create(named)
    epoch = step = 0
    # (order, next position) of an epoch that is still running
    partial: Optional[Tuple[np.ndarray, int]] = None
    if resume is not None:
        model.load_parameters(resume.params)
        named = model.named_parameters()
        state = resume.adam_state()
        if resume.rng_state is not None:
            rng.bit_generator.state = resume.rng_state
        epoch, step = resume.epoch, resume.step
        if resume.epoch_order is not None:
            order = np.asarray(resume.epoch_order, dtype=np.int64)
            if sorted(order.tolist()) != list(range(n)):
                raise ConfigError(f"checkpoint epoch order covers {len(order)} pairs, dataset has {n}")
            partial = (order, resume.epoch_offset)
        logger.info("resuming at epoch %d, step %d", epoch, step)

    last_checkpoint: Optional[str] = None
    rows: List[Dict[str, Any]] = []
    started = time.perf_counter()

    def write_checkpoint(epochs_done: int) -> None:
        nonlocal last_checkpoint
        if train_config.checkpoint_path is None:
            return
        order, offset = partial if partial is not None else (None, 0)
        ckpt = checkpoint_from_model(model, spec, state, epoch=epochs_done, step=step,
                                     rng_state=rng.bit_generator.state, train_config=train_config.to_dict(),
                                     epoch_order=None if order is None else order.tolist(), epoch_offset=offset)
        save_checkpoint(train_config.checkpoint_path, ckpt)
        last_checkpoint = train_config.checkpoint_path

    completed = epoch
    while completed < train_config.epochs and not _reached(step, train_config.max_steps):
        lr = lr_at(completed, train_config)
        order, first = partial if partial is not None else (rng.permutation(n), 0)
        partial = None
        for start in range(first, n, train_config.batch_size):
            if _reached(step, train_config.max_steps):
                partial = (order, start)
                break
            step_started = time.perf_counter()
            batch = [dataset[int(i)] for i in order[start:start + train_config.batch_size]]
            blurry, sharp = prepare_batch(batch, train_config, rng)
            with GradTape() as tape:
                result = run_model(model, blurry)
                loss = model_loss(model, result, sharp)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(f"loss became {value} at step {step}", step, last_checkpoint)
            grads = tape.backward(loss).for_named(named)
            params, state = adam_step(named, grads, state, lr)
            model.load_parameters(params)
            named = model.named_parameters()
            step += 1
            rows.append({"step": step, "epoch": completed, "lr": lr, "loss": value,
                         "seconds": time.perf_counter() - step_started})
            if step % train_config.log_every == 0:
                logger.info("epoch %d step %d loss %.6f lr %.2e", completed, step, value, lr)
        if partial is not None:
            break
        completed += 1
        if completed % train_config.checkpoint_every == 0 or completed == train_config.epochs:
            write_checkpoint(completed)

    if last_checkpoint is None or _reached(step, train_config.max_steps):
        write_checkpoint(completed)

    log = pd.DataFrame(rows, columns=["step", "epoch", "lr", "loss", "seconds"])
    return TrainingReport(log=log, steps=step, epochs_completed=completed, checkpoint_path=last_checkpoint,
                          seconds=time.perf_counter() - started)
