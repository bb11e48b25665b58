"""Single-network regression baselines: plain ANN, ANN ensembles, MC dropout."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import Dataset, Normalizer, fit_normalizer
from .nn import Network, ShapeError, dropout_masks, forward, mlp_layers
from .training import BatchRunner, History, TrainConfig, fit


class AnnModel:
    def __init__(self, network: Network, normalizer: Normalizer | None = None,
                 dropout_rate: float = 0.0, input_dropout: bool = False):
        if network.layers[-1].output_dim != 1:
            raise ShapeError("ANN must have a single output")
        self.network = network
        d = network.input_dim
        self.normalizer = normalizer or Normalizer(np.zeros(d), np.ones(d))
        self.dropout_rate = dropout_rate
        # drop raw input features too (only meaningful for nets without hidden layers)
        self.input_dropout = input_dropout

    @property
    def d(self) -> int:
        return self.network.input_dim

    def scale(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise ShapeError(f"query has {X.shape[-1]} features, model expects {self.d}")
        return self.normalizer.apply(X)


def train_ann(train: Dataset, val: Dataset, hidden: Sequence[int] = (64, 64),
              config: TrainConfig | None = None, log=None) -> tuple[AnnModel, History]:
    """Direct regression on targets with shuffled sample batches and early stopping."""
    config = config or TrainConfig()
    if val.d != train.d:
        raise ShapeError("train and validation feature dimensions differ")
    init_rng, order_rng, drop_rng = [np.random.default_rng(s)
                                     for s in np.random.SeedSequence(config.rng_seed).spawn(3)]
    normalizer = fit_normalizer(train)
    Xtr, Xva = normalizer.apply(train.X), normalizer.apply(val.X)
    net = Network.glorot(mlp_layers(train.d, hidden), init_rng)
    opt = config.make_optimizer(net.flat.size)
    runner = BatchRunner(net, opt, Xtr, train.y, False, config, drop_rng)

    def val_loss(network):
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.mean((forward(network, Xva)[0] - val.y) ** 2))

    def next_epoch():
        perm = order_rng.permutation(train.n)
        return perm, perm

    history = fit(net, config, next_epoch, runner, val_loss, log)
    return AnnModel(net, normalizer, config.dropout_rate), history


def predict_ann(model: AnnModel, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    out = forward(model.network, model.scale(np.atleast_2d(x)))[0]
    return float(out[0]) if x.ndim == 1 else out


def mc_dropout_predict(model: AnnModel, x, samples: int = 100, rate: float | None = None, rng=None):
    """Mean and population std over ``samples`` forward passes with fresh dropout masks.

    ``x`` may be one feature vector (scalars returned) or a batch (arrays).
    ``rate`` defaults to the model's training dropout rate, or 0.1.
    """
    if rate is None:
        rate = model.dropout_rate or 0.1
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate must be in (0, 1), got {rate}")
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    X = model.scale(np.atleast_2d(x))
    draws = np.empty((samples, X.shape[0]))
    for s in range(samples):
        masks = dropout_masks(model.network, X.shape[0], rate, rng, include_input=model.input_dropout)
        draws[s] = forward(model.network, X, masks)[0]
    mean, std = draws.mean(axis=0), draws.std(axis=0)
    if x.ndim == 1:
        return float(mean[0]), float(std[0])
    return mean, std


class AnnEnsemble:
    def __init__(self, members: Sequence[AnnModel]):
        members = list(members)
        if not members:
            raise ValueError("empty ensemble")
        self.members = members

    def __len__(self):
        return len(self.members)

    def predict(self, X) -> np.ndarray:
        """Arithmetic mean of the member predictions."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.mean([predict_ann(m, X) for m in self.members], axis=0)


def train_ann_ensemble(train: Dataset, val: Dataset, k: int, hidden: Sequence[int] = (64, 64),
                       config: TrainConfig | None = None) -> AnnEnsemble:
    config = config or TrainConfig()
    if k < 1:
        raise ValueError("ensemble size must be >= 1")
    seeds = np.random.SeedSequence(config.rng_seed).generate_state(k)
    return AnnEnsemble([train_ann(train, val, hidden, config.replace(rng_seed=int(s)))[0]
                        for s in seeds])
