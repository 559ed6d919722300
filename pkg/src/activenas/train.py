"""SGD training with momentum, weight decay, and oversampled epochs.

Epochs have a fixed nominal size drawn with replacement from the labeled set,
so the per-epoch step count is independent of how many labels exist -- the
schedule behaves identically early and late in an active run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, TrainingDivergedError
from .nets import ModelHandle


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    momentum: float = 0.9
    lr_initial: float = 0.1
    lr_decay_factor: float = 0.1
    lr_decay_epochs: tuple[int, ...] = ()
    weight_decay: float = 5e-4
    nominal_epoch_size: int = 2000
    seed: int = 0
    augment: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_epochs", tuple(self.lr_decay_epochs))
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_initial <= 0.0 or self.lr_decay_factor <= 0.0:
            raise ConfigError("learning rate and decay factor must be positive")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.nominal_epoch_size < 1:
            raise ConfigError(f"nominal_epoch_size must be >= 1, got {self.nominal_epoch_size}")
        decays = self.lr_decay_epochs
        if any(b <= a for a, b in zip(decays, decays[1:])):
            raise ConfigError(f"lr_decay_epochs must be strictly increasing, got {decays}")
        if self.epochs > 0 and any(d >= self.epochs for d in decays):
            raise ConfigError(
                f"lr_decay_epochs must be < epochs ({self.epochs}), got {decays}"
            )


def steps_per_epoch(cfg: TrainConfig) -> int:
    return math.ceil(cfg.nominal_epoch_size / cfg.batch_size)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate in effect during `epoch`, after any scheduled decays."""
    return cfg.lr_initial * cfg.lr_decay_factor ** sum(
        epoch >= d for d in cfg.lr_decay_epochs
    )


def premature(cfg: TrainConfig, divisor: int = 4) -> TrainConfig:
    """Shortened copy of cfg for early candidate evaluation (epochs / divisor)."""
    epochs = max(1, cfg.epochs // divisor)
    decays = tuple(d for d in cfg.lr_decay_epochs if d < epochs)
    return replace(cfg, epochs=epochs, lr_decay_epochs=decays)


def default_train_config(pool_size: int, *, epochs: int = 60, seed: int = 0) -> TrainConfig:
    """Desk-scale defaults: short schedule, small batches, capped epoch size."""
    return TrainConfig(
        epochs=epochs,
        batch_size=32,
        momentum=0.9,
        lr_initial=0.1,
        lr_decay_factor=0.1,
        lr_decay_epochs=(epochs // 2, epochs * 3 // 4),
        weight_decay=5e-4,
        nominal_epoch_size=min(4 * pool_size, 6000),
        seed=seed,
    )


def train(model: ModelHandle, x, y, cfg: TrainConfig, retrain: bool = False) -> ModelHandle:
    """Minibatch SGD on cross-entropy; mutates and returns the handle.

    Each epoch draws cfg.nominal_epoch_size indices with replacement and
    consumes them in ceil(nominal/batch) minibatches.  Deterministic given
    cfg.seed.  A non-finite loss aborts with TrainingDivergedError.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.shape[0] == 0:
        raise DataError("cannot train on an empty labeled set")
    if x.shape[0] != y.shape[0]:
        raise DataError(f"features ({x.shape[0]}) and labels ({y.shape[0]}) disagree")
    if model.trained:
        if not retrain:
            raise ConfigError("model already trained; pass retrain=True to re-init and retrain")
        model._init_params()
        model.train_history = []
        model.train_steps = 0

    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)
    velocity = np.zeros_like(model.params)
    n_steps = steps_per_epoch(cfg)

    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        order = rng.integers(0, n, size=cfg.nominal_epoch_size)
        epoch_loss = 0.0
        for step in range(n_steps):
            batch = order[step * cfg.batch_size : (step + 1) * cfg.batch_size]
            loss = model.loss_and_grad(x[batch], y[batch], dropout_rng=rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step} (lr={lr:g})"
                )
            if cfg.weight_decay > 0.0:
                model.grads[model.weight_mask] += cfg.weight_decay * model.params[
                    model.weight_mask
                ]
            velocity *= cfg.momentum
            velocity += model.grads
            model.params -= lr * velocity
            epoch_loss += loss
            model.train_steps += 1
        model.train_history.append(epoch_loss / n_steps)

    model.trained = True
    return model
