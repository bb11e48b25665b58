"""Twin network regression: train on target differences, predict from anchors.

A twin model ``F`` is trained so that ``F(x_i, x_j) ~ y_i - y_j``.  A query
``x`` is then compared against every training anchor ``(x_j, y_j)``; each
anchor yields the estimate

    e_j = F(x, x_j) / 2 - F(x_j, x) / 2 + y_j

and the prediction is the mean of the ``e_j``.  Their spread and the
antisymmetry residuals ``F(x, x_j) + F(x_j, x)`` are by-products used for
uncertainty estimation (see :mod:`twinreg.uncertainty`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset, Normalizer, fit_normalizer
from .nn import Network, ShapeError, forward, mlp_layers
from .pairing import PairStream, validation_pairs
from .training import BatchRunner, History, TrainConfig, fit

# rows of (query, anchor) pairs evaluated per network call
_CHUNK_ROWS = 1 << 16


@dataclass
class PredictionBundle:
    estimates: np.ndarray   # e_j, one per anchor
    forward: np.ndarray     # F(x, x_j)
    backward: np.ndarray    # F(x_j, x)
    mean: float
    std: float              # population std of the estimates

    @property
    def residuals(self) -> np.ndarray:
        """Antisymmetry violations ``F(x, x_j) + F(x_j, x)``."""
        return self.forward + self.backward

    @property
    def sigma_sym(self) -> float:
        return float(np.std(self.residuals))

    @classmethod
    def from_arrays(cls, fwd, bwd, anchor_y) -> "PredictionBundle":
        est = 0.5 * fwd - 0.5 * bwd + anchor_y
        return cls(est, fwd, bwd, float(np.mean(est)), float(np.std(est)))


class TwinPredictor:
    """Anchors plus a pairwise difference function on normalized features."""

    def __init__(self, anchors_X, anchors_y, normalizer: Normalizer | None = None):
        anchors_X = np.asarray(anchors_X, dtype=np.float64)
        anchors_y = np.asarray(anchors_y, dtype=np.float64)
        if anchors_X.ndim != 2 or anchors_X.shape[0] < 1:
            raise ValueError("need a nonempty 2-d anchor matrix")
        if anchors_y.shape != (anchors_X.shape[0],) or not np.isfinite(anchors_y).all():
            raise ValueError("anchor targets must be finite and match the anchor count")
        self.anchors_X = anchors_X
        self.anchors_y = anchors_y
        if normalizer is None:
            d = anchors_X.shape[1]
            normalizer = Normalizer(np.zeros(d), np.ones(d))
        self.normalizer = normalizer
        self.scaled_anchors = normalizer.apply(anchors_X)
        self.evaluations = 0

    @property
    def d(self) -> int:
        return self.anchors_X.shape[1]

    @property
    def n_anchors(self) -> int:
        return self.anchors_X.shape[0]

    def scale(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.d:
            raise ShapeError(f"query has {X.shape[-1]} features, model expects {self.d}")
        return self.normalizer.apply(X)

    def difference(self, A, B) -> np.ndarray:
        """``F(A[r], B[r])`` for each row of two normalized feature matrices."""
        self.evaluations += len(A)
        return self._difference(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64))

    def _difference(self, A, B):
        raise NotImplementedError


class TwinModel(TwinPredictor):
    def __init__(self, network: Network, anchors_X, anchors_y, normalizer: Normalizer | None = None):
        super().__init__(anchors_X, anchors_y, normalizer)
        if network.input_dim != 2 * self.d:
            raise ShapeError(f"network takes {network.input_dim} inputs, expected 2 x {self.d}")
        self.network = network

    def _difference(self, A, B):
        return forward(self.network, np.hstack([A, B]))[0]


class FunctionTwin(TwinPredictor):
    """Twin predictor backed by a plain function ``fn(A, B) -> differences``.

    Useful as an oracle: with ``fn(a, b) = f(a) - f(b)`` predictions are exact.
    """

    def __init__(self, fn: Callable, anchors_X, anchors_y, normalizer: Normalizer | None = None):
        super().__init__(anchors_X, anchors_y, normalizer)
        self.fn = fn

    def _difference(self, A, B):
        return np.asarray(self.fn(A, B), dtype=np.float64)


def anchor_grid(model: TwinPredictor, X_query) -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``F(x_q, x_j)`` and ``F(x_j, x_q)`` of shape (queries, anchors)."""
    Q = model.scale(np.atleast_2d(X_query))
    A = model.scaled_anchors
    n = A.shape[0]
    fwd = np.empty((Q.shape[0], n))
    bwd = np.empty((Q.shape[0], n))
    step = max(1, _CHUNK_ROWS // n)
    for s in range(0, Q.shape[0], step):
        q = Q[s:s + step]
        qq = np.repeat(q, n, axis=0)
        aa = np.tile(A, (q.shape[0], 1))
        fwd[s:s + step] = model.difference(qq, aa).reshape(q.shape[0], n)
        bwd[s:s + step] = model.difference(aa, qq).reshape(q.shape[0], n)
    return fwd, bwd


def predict_one(model: TwinPredictor, x) -> PredictionBundle:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("predict_one takes a single feature vector")
    return predict_batch(model, x[None, :])[0]


def predict_batch(model: TwinPredictor, X_query) -> list[PredictionBundle]:
    fwd, bwd = anchor_grid(model, X_query)
    return [PredictionBundle.from_arrays(f, b, model.anchors_y) for f, b in zip(fwd, bwd)]


def predict(model: TwinPredictor, X_query) -> np.ndarray:
    """Anchor-averaged predictions only."""
    fwd, bwd = anchor_grid(model, X_query)
    return np.mean(0.5 * fwd - 0.5 * bwd + model.anchors_y, axis=1)


# -- ensembles ---------------------------------------------------------------

class TwinEnsemble:
    def __init__(self, members: Sequence[TwinPredictor]):
        members = list(members)
        if not members:
            raise ValueError("empty ensemble")
        if len({m.d for m in members}) != 1:
            raise ValueError("ensemble members disagree on feature dimension")
        self.members = members

    def __len__(self):
        return len(self.members)


def predict_ensemble(ensemble: TwinEnsemble, x) -> PredictionBundle:
    """Pool every member's per-anchor estimates into one bundle."""
    return predict_ensemble_batch(ensemble, np.asarray(x, dtype=np.float64)[None, :])[0]


def predict_ensemble_batch(ensemble: TwinEnsemble, X_query) -> list[PredictionBundle]:
    grids = [(anchor_grid(m, X_query), m.anchors_y) for m in ensemble.members]
    bundles = []
    for q in range(np.atleast_2d(X_query).shape[0]):
        fwd = np.concatenate([g[0][q] for g, _ in grids])
        bwd = np.concatenate([g[1][q] for g, _ in grids])
        ys = np.concatenate([y for _, y in grids])
        bundles.append(PredictionBundle.from_arrays(fwd, bwd, ys))
    return bundles


def predict_ensemble_mean(ensemble: TwinEnsemble, X_query) -> np.ndarray:
    return np.array([b.mean for b in predict_ensemble_batch(ensemble, X_query)])


# -- training ----------------------------------------------------------------

def _rngs(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def train_twin(train: Dataset, val: Dataset, hidden: Sequence[int] = (64, 64),
               config: TrainConfig | None = None, log=None) -> tuple[TwinModel, History]:
    """Fit a twin network on all ordered training pairs with mirror batches.

    Validation loss is the pair MSE between validation points and a fixed
    subsample of training anchors, both orders.  Training stops once it has
    not improved for ``config.patience`` epochs; the best weights are kept.
    """
    config = config or TrainConfig()
    if train.n < 2:
        raise ValueError("twin training needs at least two training points")
    if val.d != train.d:
        raise ShapeError("train and validation feature dimensions differ")
    if config.batch_size % 2:
        raise ValueError("twin batches hold mirror pairs; batch_size must be even")
    init_rng, stream_rng, val_rng, drop_rng = _rngs(config.rng_seed, 4)

    normalizer = fit_normalizer(train)
    Xtr, Xva = normalizer.apply(train.X), normalizer.apply(val.X)
    net = Network.glorot(mlp_layers(2 * train.d, hidden), init_rng)
    opt = config.make_optimizer(net.flat.size)

    v, a, val_first = validation_pairs(val.n, train.n, val_rng, config.val_anchors)
    left = np.where(val_first[:, None], Xva[v], Xtr[a])
    right = np.where(val_first[:, None], Xtr[a], Xva[v])
    val_inputs = np.hstack([left, right])
    val_targets = np.where(val_first, val.y[v] - train.y[a], train.y[a] - val.y[v])

    def val_loss(network):
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.mean((forward(network, val_inputs)[0] - val_targets) ** 2))

    stream = PairStream(train.n, config.batch_size, stream_rng)
    runner = BatchRunner(net, opt, Xtr, train.y, True, config, drop_rng)
    history = fit(net, config, lambda: stream.take(config.steps_per_epoch), runner, val_loss, log)
    return TwinModel(net, train.X, train.y, normalizer), history


def train_twin_ensemble(train: Dataset, val: Dataset, k: int, hidden: Sequence[int] = (64, 64),
                        config: TrainConfig | None = None) -> TwinEnsemble:
    """``k`` twin models on the same data with seeds derived from ``config.rng_seed``."""
    config = config or TrainConfig()
    if k < 1:
        raise ValueError("ensemble size must be >= 1")
    seeds = np.random.SeedSequence(config.rng_seed).generate_state(k)
    members = [train_twin(train, val, hidden, config.replace(rng_seed=int(s)))[0] for s in seeds]
    return TwinEnsemble(members)


# -- diagnostics -------------------------------------------------------------

def error_suppression_probe(model: TwinPredictor, X, y) -> float:
    """Ratio of single-anchor error to averaged-prediction error on held-out data.

    Single-anchor estimates are the 2n one-sided values ``F(x, x_j) + y_j`` and
    ``y_j - F(x_j, x)``; their root-mean-square error is divided by the RMSE of
    the anchor average.  Independent anchor errors give roughly ``sqrt(2n)``,
    a shared error gives 1.  Returns nan when the averaged RMSE is zero up to
    rounding.
    """
    if model.n_anchors < 2:
        raise ValueError("probe needs at least two anchors")
    y = np.asarray(y, dtype=np.float64)
    fwd, bwd = anchor_grid(model, X)
    single = np.concatenate([fwd + model.anchors_y, model.anchors_y - bwd], axis=1) - y[:, None]
    averaged = single.mean(axis=1)
    rmse_avg = math.sqrt(float(np.mean(averaged ** 2)))
    if rmse_avg <= 1e-12 * max(1.0, float(np.abs(y).max())):
        return math.nan
    return math.sqrt(float(np.mean(single ** 2))) / rmse_avg


def rmse(pred, y) -> float:
    return math.sqrt(float(np.mean((np.asarray(pred) - np.asarray(y)) ** 2)))
