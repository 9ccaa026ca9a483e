"""Ensemble training: Adam with a three-phase learning-rate schedule.

The schedule drops the learning rate by a decade at two fixed epoch
boundaries (70/30/30 epochs at 1e-2/1e-3/1e-4 by default) to keep the
recurrent gradients from destabilizing training; data is reshuffled before
every epoch and each mini-batch is truncated to its shortest sequence.
"""

from dataclasses import dataclass, field

import numpy as np

from ..dataset import make_minibatches
from .model import EnsembleModel, ModelConfig, TrainingDiverged
from .optim import Adam


@dataclass
class TrainConfig:
    batch_size: int = 8
    epochs: tuple = (70, 30, 30)
    learning_rates: tuple = (1e-2, 1e-3, 1e-4)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        self.epochs = tuple(int(e) for e in self.epochs)
        self.learning_rates = tuple(float(lr) for lr in self.learning_rates)
        if len(self.epochs) != len(self.learning_rates):
            raise ValueError("epochs and learning_rates phases must match")
        if any(e <= 0 for e in self.epochs) or any(lr <= 0 for lr in self.learning_rates):
            raise ValueError("epoch counts and learning rates must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def total_epochs(self):
        return sum(self.epochs)


def learning_rate_schedule(cfg):
    """Per-epoch learning rate over the whole run."""
    return np.concatenate([np.full(n, lr) for n, lr in zip(cfg.epochs, cfg.learning_rates)])


@dataclass
class TrainResult:
    model: EnsembleModel
    epoch_losses: np.ndarray = field(default=None)
    epoch_lrs: np.ndarray = field(default=None)


def train(ds, cfg, model_config=None, model=None):
    """Train the autoencoder ensemble on a dataset.

    Deterministic given ``cfg.seed``: the seed fixes the parameter init,
    the frozen sparse wiring, and every epoch's shuffle.  Raises
    TrainingDiverged as soon as a batch loss is non-finite.
    """
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    if model is None:
        model = EnsembleModel.build(model_config or ModelConfig(), seed=cfg.seed)
    opt = Adam(
        model.named_parameters(),
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    lrs = learning_rate_schedule(cfg)
    shuffle_seeds = np.random.SeedSequence([cfg.seed, 0x5A7]).generate_state(len(lrs))
    epoch_losses = np.zeros(len(lrs))
    for epoch, lr in enumerate(lrs):
        batches = make_minibatches(ds, cfg.batch_size, seed=int(shuffle_seeds[epoch]))
        total, count = 0.0, 0
        for b, batch in enumerate(batches):
            J, grads = model.grad(batch)
            if not np.isfinite(J):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1}, batch {b + 1} "
                    f"(lr={lr:g}): J={J!r}"
                )
            opt.step(grads, lr)
            total += J * len(batch)
            count += len(batch)
        epoch_losses[epoch] = total / count
    return TrainResult(model=model, epoch_losses=epoch_losses, epoch_lrs=lrs)
