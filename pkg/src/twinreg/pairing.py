"""Batchwise enumeration of all ordered training pairs.

An epoch visits each of the n**2 ordered pairs ``(i, j)`` exactly once, and
every batch holds a pair together with its mirror ``(j, i)``.  Unordered
off-diagonal pairs and couples of diagonal pairs form two-slot units; units
are shuffled each epoch and packed ``batch_size // 2`` to a batch.  An odd
diagonal pair left over goes last, and the final batch may be short.
"""
from __future__ import annotations

import numpy as np


def epoch_pair_count(n: int) -> int:
    if n < 1:
        raise ValueError("need at least one training point")
    return n * n


def epoch_pairs(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One shuffled epoch as index arrays ``(I, J)`` in emission order."""
    if n < 1:
        raise ValueError("need at least one training point")
    iu, ju = np.triu_indices(n, k=1)
    diag = rng.permutation(n)
    n_couples = n // 2
    units_a = np.concatenate([iu, diag[0:2 * n_couples:2]])
    units_b = np.concatenate([ju, diag[1:2 * n_couples:2]])
    is_couple = np.zeros(units_a.size, dtype=bool)
    is_couple[iu.size:] = True
    order = rng.permutation(units_a.size)
    a, b, couple = units_a[order], units_b[order], is_couple[order]

    # off-diagonal unit (a, b) -> (a, b), (b, a); diagonal couple -> (a, a), (b, b)
    I = np.empty(2 * a.size + n % 2, dtype=np.int64)
    J = np.empty_like(I)
    I[0:2 * a.size:2] = a
    J[0:2 * a.size:2] = np.where(couple, a, b)
    I[1:2 * a.size:2] = b
    J[1:2 * a.size:2] = np.where(couple, b, a)
    if n % 2:
        I[-1] = J[-1] = diag[-1]
    return I, J


class PairStream:
    """Endless stream of mirror-closed pair batches, reshuffled every epoch."""

    def __init__(self, n: int, batch_size: int = 16, seed=None):
        if n < 1:
            raise ValueError("need at least one training point")
        if batch_size < 2 or batch_size % 2:
            raise ValueError(f"batch_size must be even and >= 2, got {batch_size}")
        self.n = n
        self.batch_size = batch_size
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.epoch = 0
        self._new_epoch()

    def _new_epoch(self):
        self.I, self.J = epoch_pairs(self.n, self.rng)
        self.cursor = 0

    def _advance(self):
        if self.cursor >= self.I.size:
            self.epoch += 1
            self._new_epoch()

    def next_batch(self) -> list[tuple[int, int]]:
        I, J = self.next_batch_arrays()
        return list(zip(I.tolist(), J.tolist()))

    def next_batch_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        self._advance()
        stop = min(self.cursor + self.batch_size, self.I.size)
        sl = slice(self.cursor, stop)
        self.cursor = stop
        return self.I[sl], self.J[sl]

    def take(self, n_batches: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n_batches`` batches as one pair of index arrays.

        Never crosses an epoch boundary: stops early at the end of the current
        epoch.  ``None`` takes the rest of the epoch.
        """
        self._advance()
        remaining = self.I.size - self.cursor
        count = remaining if n_batches is None else min(remaining, n_batches * self.batch_size)
        sl = slice(self.cursor, self.cursor + count)
        self.cursor += count
        return self.I[sl], self.J[sl]


def validation_pairs(n_val: int, n_train: int, rng: np.random.Generator, max_anchors: int = 200):
    """Mirrored pairs between validation points and a fixed training-anchor subsample.

    Returns ``(val_index, anchor_index, val_first)``: each (v, a) combination
    appears once with the validation point first and once with it second.
    """
    anchors = np.sort(rng.choice(n_train, size=min(max_anchors, n_train), replace=False))
    v, a = np.meshgrid(np.arange(n_val), anchors, indexing="ij")
    v, a = v.ravel(), a.ravel()
    val_first = np.concatenate([np.ones(v.size, bool), np.zeros(v.size, bool)])
    return np.concatenate([v, v]), np.concatenate([a, a]), val_first
