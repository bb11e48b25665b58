"""Mini-batch training loop shared by the twin network and the plain ANN."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .nn import Network, dropout_masks, mse_gradient, weight_penalty
from .optim import Optimizer, make_optimizer


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, detail: str = "non-finite loss"):
        super().__init__(f"{detail} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    batch_size: int = 16
    l2_penalty: float = 0.0
    dropout_rate: float = 0.0
    patience: int = 50
    max_epochs: int = 2000
    rng_seed: int = 0
    optimizer: str = "adadelta"
    learning_rate: float | None = None
    rho: float | None = None
    epsilon: float | None = None
    # batches per epoch for pair training; None means a full pass over all n**2 pairs
    steps_per_epoch: int | None = None
    val_anchors: int = 200

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be positive")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be nonnegative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be positive")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})

    def make_optimizer(self, size: int) -> Optimizer:
        return make_optimizer(self.optimizer, size, rho=self.rho, epsilon=self.epsilon,
                              learning_rate=self.learning_rate)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    initial_val_loss: float = float("nan")
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def rows(self):
        for k, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            yield {"epoch": k, "train_loss": tr, "val_loss": va}


def _layout(net: Network):
    dims = np.array([[l.input_dim, l.output_dim] for l in net.layers], dtype=np.int64)
    relu = np.array([l.activation == "relu" for l in net.layers])
    return dims, relu


class BatchRunner:
    """Applies optimizer steps for consecutive batches of index pairs.

    Uses the compiled kernel unless dropout is active.
    """

    def __init__(self, net: Network, opt: Optimizer, X, y, twin: bool, config: TrainConfig,
                 rng: np.random.Generator):
        self.net, self.opt, self.config, self.rng = net, opt, config, rng
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.twin = twin
        self.dims, self.relu = _layout(net)
        self.wmask = net.weight_mask()
        self.compiled = config.dropout_rate == 0.0

    def run(self, I, J, epoch: int) -> float:
        """Train on the batches in ``(I, J)``; returns the mean batch loss."""
        if self.compiled:
            opt = self.opt
            kind = _kernels.ADADELTA if opt.kind == "adadelta" else _kernels.RMSPROP
            loss_sum, count, bad = _kernels.run_batches(
                self.net.flat, self.dims, self.relu, self.X, self.y,
                np.ascontiguousarray(I, dtype=np.int64), np.ascontiguousarray(J, dtype=np.int64),
                self.twin, self.config.batch_size, kind, opt.rho, opt.epsilon,
                opt.learning_rate, opt.sq_grad, opt.sq_update, self.config.l2_penalty, self.wmask)
            self.net.touch()
            if bad >= 0:
                raise TrainingDivergedError(epoch, bad)
            return loss_sum / max(count, 1)
        return self._run_numpy(I, J, epoch)

    def _run_numpy(self, I, J, epoch: int) -> float:
        bs, losses = self.config.batch_size, []
        for b, start in enumerate(range(0, len(I), bs)):
            i = I[start:start + bs]
            if self.twin:
                j = J[start:start + bs]
                Xb = np.hstack([self.X[i], self.X[j]])
                tb = self.y[i] - self.y[j]
            else:
                Xb, tb = self.X[i], self.y[i]
            masks = dropout_masks(self.net, len(i), self.config.dropout_rate, self.rng)
            loss, grad = mse_gradient(self.net, Xb, tb, self.config.l2_penalty, masks)
            if not np.isfinite(loss) or not np.isfinite(grad).all():
                raise TrainingDivergedError(epoch, b)
            # report the data term only, like the compiled path
            losses.append(loss - self.config.l2_penalty * weight_penalty(self.net))
            self.opt.step(self.net, grad)
        return float(np.mean(losses)) if losses else float("nan")


def fit(net: Network, config: TrainConfig, next_epoch: Callable[[], tuple], runner: BatchRunner,
        val_loss: Callable[[Network], float], log=None) -> History:
    """Early-stopped training; restores the weights with the best validation loss."""
    history = History(initial_val_loss=val_loss(net))
    best, best_flat, wait = history.initial_val_loss, net.flat.copy(), 0
    for epoch in range(1, config.max_epochs + 1):
        I, J = next_epoch()
        tr = runner.run(I, J, epoch)
        va = val_loss(net)
        if not np.isfinite(va):
            raise TrainingDivergedError(epoch, -1, "non-finite validation loss")
        history.train_loss.append(tr)
        history.val_loss.append(va)
        if log is not None:
            log(epoch, tr, va)
        if va < best:
            best, best_flat, wait = va, net.flat.copy(), 0
            history.best_epoch = epoch
        else:
            wait += 1
            if wait >= config.patience:
                history.stopped_early = True
                break
    net.flat[...] = best_flat
    net.touch()
    return history
