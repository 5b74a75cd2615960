"""Minibatch NLL training with plateau LR decay, early stopping and checkpointing."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, NumericError
from .network import forward_gaussian, loss_and_grad, nll_loss
from .optim import OPTIMIZERS, init_state, optimizer_step

logger = logging.getLogger(__name__)

LR_RANGE = (1e-4, 1e-1)
BATCH_RANGE = (32, 256)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    optimizer: str = "adam"
    lr_patience: int = 15
    lr_factor: float = 0.5
    early_stop_patience: int = 20
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        lo, hi = LR_RANGE
        if not (lo <= self.learning_rate <= hi):
            raise ConfigError(f"learning rate {self.learning_rate} outside [{lo}, {hi}]")
        lo, hi = BATCH_RANGE
        if not (lo <= self.batch_size <= hi):
            raise ConfigError(f"batch size {self.batch_size} outside [{lo}, {hi}]")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not (0 < self.lr_factor < 1):
            raise ConfigError("lr_factor must lie in (0, 1)")
        if self.max_epochs < 1 or self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("epoch counts and patiences must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    network: object
    best_valid_nll: float
    best_epoch: int
    history: list = field(default_factory=list)
    diverged: bool = False

    @property
    def epochs_run(self):
        return self.history[-1]["epoch"] if self.history else 0


def evaluate_nll(net, x, y, chunk=4096):
    """Mean NLL over a dataset, evaluated in chunks."""
    total, count = 0.0, 0
    for start in range(0, len(x), chunk):
        pred = forward_gaussian(net, x[start : start + chunk])
        yb = np.asarray(y[start : start + chunk]).reshape(pred.mean.shape)
        total += nll_loss(pred, yb) * pred.mean.size
        count += pred.mean.size
    return total / count


def train(net, train_data, valid_data, cfg):
    """Fit ``net`` by minimising the Gaussian NLL.

    The learning rate is multiplied by ``cfg.lr_factor`` after
    ``cfg.lr_patience`` epochs without a new best validation NLL, and training
    stops after ``cfg.early_stop_patience`` such epochs. The returned network
    carries the weights of the best validation epoch. A non-finite loss aborts
    training and sets ``diverged``.
    """
    x_tr, y_tr = (np.asarray(a, dtype=np.float64) for a in train_data)
    x_va, y_va = (np.asarray(a, dtype=np.float64) for a in valid_data)
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ConfigError("training and validation splits must be nonempty")

    rng = np.random.default_rng(cfg.seed)
    w = net.weights.copy()
    state = init_state(cfg.optimizer, w.size)
    lr = cfg.learning_rate

    try:
        best = evaluate_nll(net, x_va, y_va)
    except NumericError:
        best = np.inf
    if not np.isfinite(best):
        best = np.inf
    best_w, best_epoch = w.copy(), 0
    history = [{"epoch": 0, "train_nll": float("nan"), "valid_nll": best, "lr": lr}]
    since_best = 0
    since_reduce = 0
    diverged = False
    n = len(x_tr)

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        try:
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                loss, g = loss_and_grad(net.with_weights(w), x_tr[idx], y_tr[idx])
                if not np.isfinite(loss):
                    raise NumericError("non-finite training loss")
                w, state = optimizer_step(cfg.optimizer, w, g, lr, state)
                total += loss * len(idx)
                seen += len(idx)
            if not np.all(np.isfinite(w)):
                raise NumericError("non-finite weights after update")
            valid = evaluate_nll(net.with_weights(w), x_va, y_va)
            if not np.isfinite(valid):
                raise NumericError("non-finite validation loss")
        except (NumericError, FloatingPointError, OverflowError) as exc:
            logger.info("training diverged at epoch %d: %s", epoch, exc)
            diverged = True
            break

        history.append({"epoch": epoch, "train_nll": total / seen, "valid_nll": valid, "lr": lr})
        if valid < best:
            best, best_w, best_epoch = valid, w.copy(), epoch
            since_best = since_reduce = 0
        else:
            since_best += 1
            since_reduce += 1
            if since_reduce >= cfg.lr_patience:
                lr *= cfg.lr_factor
                since_reduce = 0
            if since_best >= cfg.early_stop_patience:
                break

    return TrainResult(
        network=net.with_weights(best_w),
        best_valid_nll=float(best),
        best_epoch=best_epoch,
        history=history,
        diverged=diverged,
    )
