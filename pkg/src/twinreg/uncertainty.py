"""Self-consistency diagnostics, latent-space distance and power-law fits.

A perfect twin model satisfies ``F(a, b) + F(b, a) = 0`` and, for any three
points, ``F(a, b) + F(b, c) + F(c, a) = 0``; with known anchor targets the
latter means every anchor gives the same estimate.  How badly a query breaks
these conditions serves as an error proxy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from .baselines import AnnModel
from .nn import penultimate_activations
from .twin import TwinModel, TwinPredictor, anchor_grid

LOOP_BUDGET = 256


class DegenerateFitError(ValueError):
    pass


@dataclass
class ConsistencyReport:
    sigma_pred: float                 # std of the per-anchor estimates
    sigma_sym: float                  # std of F(x, x_j) + F(x_j, x)
    loop3_residual: float | None = None
    latent_distance: float | None = None


def sample_anchor_pairs(n: int, rng=None, budget: int = LOOP_BUDGET) -> np.ndarray:
    """All ordered anchor pairs when there are at most ``budget``, else a uniform sample."""
    if n * n <= budget:
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return np.column_stack([i.ravel(), j.ravel()])
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return rng.integers(0, n, size=(budget, 2))


def _pair_differences(model: TwinPredictor, pairs) -> np.ndarray:
    A = model.scaled_anchors
    return model.difference(A[pairs[:, 0]], A[pairs[:, 1]])


def loop3_residual(model: TwinPredictor, x_k, anchor_pairs) -> float:
    """Mean ``|F(x_i, x_j) + F(x_j, x_k) + F(x_k, x_i)|`` over anchor pairs ``(i, j)``."""
    pairs = np.asarray(anchor_pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise ValueError("need at least one anchor pair")
    return float(_loop3_many(model, np.atleast_2d(x_k), pairs)[0])


def _loop3_many(model, X, pairs, grids=None):
    fwd, bwd = grids if grids is not None else anchor_grid(model, X)
    fij = _pair_differences(model, pairs)
    i, j = pairs[:, 0], pairs[:, 1]
    # F(x_j, x_k) = bwd[k, j], F(x_k, x_i) = fwd[k, i]
    return np.mean(np.abs(fij[None, :] + bwd[:, j] + fwd[:, i]), axis=1)


def latent_embedding(model, X) -> np.ndarray:
    """Penultimate-layer activations.

    Twin models embed the pair ``(x, mean training point)``; ANNs embed ``x``.
    """
    if isinstance(model, TwinModel):
        Q = model.scale(np.atleast_2d(X))
        ref = np.broadcast_to(model.scaled_anchors.mean(axis=0), Q.shape)
        return penultimate_activations(model.network, np.hstack([Q, ref]))
    if isinstance(model, AnnModel):
        return penultimate_activations(model.network, model.scale(np.atleast_2d(X)))
    raise TypeError(f"no latent space for {type(model).__name__}")


def nearest_distance(embeddings, reference) -> np.ndarray:
    """Euclidean distance from each embedding row to its nearest reference row."""
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    if reference.shape[0] == 0:
        raise ValueError("empty reference set")
    return cdist(np.atleast_2d(embeddings), reference).min(axis=1)


def latent_distance(model, x, reference_set) -> float:
    reference_set = np.asarray(reference_set, dtype=np.float64)
    if reference_set.size == 0:
        raise ValueError("empty reference set")
    return float(nearest_distance(latent_embedding(model, x), latent_embedding(model, reference_set))[0])


def consistency_report(model: TwinPredictor, x, rng=None, loop_budget: int = LOOP_BUDGET) -> ConsistencyReport:
    return consistency_reports(model, np.atleast_2d(x), rng, loop_budget)[0]


def consistency_reports(model: TwinPredictor, X, rng=None, loop_budget: int = LOOP_BUDGET,
                        reference=None) -> list[ConsistencyReport]:
    """Diagnostics for many queries sharing one anchor-pair sample.

    ``reference`` (raw features) defaults to the model's anchors.
    """
    if model.n_anchors < 2:
        raise ValueError("consistency diagnostics need at least two anchors")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    fwd, bwd = anchor_grid(model, X)
    est = 0.5 * fwd - 0.5 * bwd + model.anchors_y
    sigma_pred = est.std(axis=1)
    sigma_sym = (fwd + bwd).std(axis=1)
    pairs = sample_anchor_pairs(model.n_anchors, rng, loop_budget)
    loops = _loop3_many(model, X, pairs, (fwd, bwd))
    if isinstance(model, TwinModel):
        ref = model.anchors_X if reference is None else reference
        dist = nearest_distance(latent_embedding(model, X), latent_embedding(model, ref))
    else:
        dist = [None] * X.shape[0]
    return [ConsistencyReport(float(a), float(b), float(c), None if d is None else float(d))
            for a, b, c, d in zip(sigma_pred, sigma_sym, loops, dist)]


@dataclass
class PowerLawFit:
    """``|error| ~ a * estimator**alpha``, fitted as a line in log-log space."""
    a: float
    alpha: float
    residual: float          # rms residual of the log-log fit
    n_points: int
    alpha_stderr: float
    a_stderr_log: float

    def __call__(self, estimator):
        return self.a * np.asarray(estimator, dtype=np.float64) ** self.alpha


def fit_power_law(points) -> PowerLawFit:
    """Least-squares power law through (estimator, |error|) points.

    Points with a nonpositive coordinate are dropped before the log transform.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    keep = (pts[:, 0] > 0) & (pts[:, 1] > 0) & np.isfinite(pts).all(axis=1)
    pts = pts[keep]
    if len(pts) < 3:
        raise DegenerateFitError(f"need >= 3 strictly positive points, got {len(pts)}")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0.0:
        raise DegenerateFitError("all estimator values are identical")
    fit = stats.linregress(lx, ly)
    resid = ly - (fit.intercept + fit.slope * lx)
    return PowerLawFit(a=math.exp(fit.intercept), alpha=float(fit.slope),
                       residual=float(np.sqrt(np.mean(resid ** 2))), n_points=len(pts),
                       alpha_stderr=float(fit.stderr), a_stderr_log=float(fit.intercept_stderr))
