"""Datasets, feature normalization, splits and synthetic generators."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] < 1 or self.X.shape[1] < 1:
            raise DataError(f"feature matrix must be n x d with n, d >= 1, got {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise DataError(f"target length {self.y.shape} does not match {self.X.shape[0]} rows")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise DataError("dataset contains non-finite values")
        if not self.feature_names:
            self.feature_names = [f"x{k}" for k in range(self.X.shape[1])]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, index, tag: str = "") -> "Dataset":
        return Dataset(self.X[index], self.y[index], list(self.feature_names),
                       f"{self.provenance}[{tag}]" if tag else self.provenance, dict(self.meta))


# -- CSV ---------------------------------------------------------------------

def load_csv(path, target_column: str) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise DataError(f"{path}: target column {target_column!r} not in header {header}")
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise DataError(f"{path}: empty dataset")
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} at row {r + 2}, "
                                f"column {header[c]!r}") from None
    t = header.index(target_column)
    features = [h for k, h in enumerate(header) if k != t]
    X = np.delete(values, t, axis=1)
    return Dataset(X, values[:, t], features, str(path))


def save_csv(dataset: Dataset, path, target_column: str = "y", sidecar: dict | None = None):
    """Write header + rows with round-trip float formatting, plus a JSON sidecar."""
    path = Path(path)
    lines = [",".join([*dataset.feature_names, target_column])]
    for xrow, yv in zip(dataset.X.tolist(), dataset.y.tolist()):
        lines.append(",".join(repr(v) for v in [*xrow, yv]))
    path.write_text("\n".join(lines) + "\n")
    meta = {"provenance": dataset.provenance, "n": dataset.n, "d": dataset.d,
            "target_column": target_column, **dataset.meta, **(sidecar or {})}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# -- normalization -----------------------------------------------------------

@dataclass
class Normalizer:
    """Affine map sending each training feature column onto [-1, 1]."""
    center: np.ndarray
    half_range: np.ndarray

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.center) / self.half_range

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "half_range": self.half_range.tolist()}


def fit_normalizer(train: Dataset | np.ndarray) -> Normalizer:
    X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    lo, hi = X.min(axis=0), X.max(axis=0)
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    # constant columns map to 0
    half = np.where(half > 0, half, 1.0)
    return Normalizer(center, half)


def apply_normalizer(meta: Normalizer, X) -> np.ndarray:
    return meta.apply(X)


# -- splits ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    kind: str = "random"
    fractions: tuple = (0.9, 0.05, 0.05)
    out_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random", "threshold"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        total = sum(self.fractions) + (self.out_fraction if self.kind == "threshold" else 0.0)
        if not math.isclose(total, 1.0, abs_tol=1e-9) or min(self.fractions) < 0:
            raise ValueError(f"split fractions must sum to 1, got {total}")

    @classmethod
    def threshold(cls, seed: int = 0, fractions=(0.5, 0.1, 0.15), out_fraction: float = 0.25):
        return cls("threshold", tuple(fractions), out_fraction, seed)


def _cut_sizes(n: int, fractions) -> list[int]:
    sizes = [int(round(f * n)) for f in fractions]
    sizes[0] = n - sum(sizes[1:])
    return sizes


def split_indices(n: int, y, spec: SplitSpec) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "random":
        perm = rng.permutation(n)
        names = ("train", "val", "test")
        sizes = _cut_sizes(n, spec.fractions)
    else:
        n_out = int(round(spec.out_fraction * n))
        by_target = np.argsort(np.asarray(y), kind="stable")
        out = by_target[n - n_out:]
        rest = rng.permutation(by_target[:n - n_out])
        sizes = [int(round(f * n)) for f in spec.fractions]
        sizes[-1] = rest.size - sum(sizes[:-1])
        perm = np.concatenate([rest, out])
        names = ("train", "val", "test_in", "test_out")
        sizes.append(n_out)
    parts, start = {}, 0
    for name, size in zip(names, sizes):
        if size < 1:
            raise DataError(f"split leaves subset {name!r} empty (n={n})")
        parts[name] = perm[start:start + size]
        start += size
    return parts


def split(dataset: Dataset, spec: SplitSpec) -> dict[str, Dataset]:
    parts = split_indices(dataset.n, dataset.y, spec)
    return {name: dataset.subset(idx, name) for name, idx in parts.items()}


# -- synthetic generators ----------------------------------------------------

def random_polynomial_coefficients(d: int, rng: np.random.Generator):
    """Upper-triangular quadratic coefficients, linear coefficients and constant."""
    quad = np.triu(rng.uniform(-1.0, 1.0, size=(d, d)))
    lin = rng.uniform(-1.0, 1.0, size=d)
    const = float(rng.uniform(-1.0, 1.0))
    return quad, lin, const


def random_polynomial(X, quad, lin, const) -> np.ndarray:
    """sum_{i<=j} quad[i, j] x_i x_j + sum_i lin[i] x_i + const."""
    X = np.asarray(X, dtype=np.float64)
    return np.einsum("ni,ij,nj->n", X, np.triu(quad), X) + X @ lin + const


def gen_random_polynomial(n: int, seed: int = 0, d: int = 5, coefficients=None) -> Dataset:
    """Noise-free degree-two polynomial of ``d`` uniform features.

    Coefficients depend only on ``seed`` (not on ``n``), so datasets of
    different sizes share one function.  ``coefficients`` overrides them.
    """
    _check_n(n)
    coef_rng = np.random.default_rng([seed, 0])
    quad, lin, const = coefficients if coefficients is not None else \
        random_polynomial_coefficients(d, coef_rng)
    X = np.random.default_rng([seed, 1]).uniform(-1.0, 1.0, size=(n, d))
    y = random_polynomial(X, quad, lin, const)
    meta = {"generator": "rp", "seed": seed, "quad": np.asarray(quad).tolist(),
            "lin": np.asarray(lin).tolist(), "const": const}
    return Dataset(X, y, [f"x{k + 1}" for k in range(d)], f"rp(n={n},seed={seed})", meta)


RCL_RANGES = {"V0": (1.0, 2.0), "omega": (1.0, 3.0), "t": (0.0, 2 * np.pi),
              "R": (0.5, 2.0), "L": (0.5, 2.0), "C": (0.5, 2.0)}
WSB_RANGES = {"U": (1.0, 2.0), "R1": (0.5, 2.0), "R2": (0.5, 2.0), "R3": (0.5, 2.0)}


def rcl_current(V0, omega, t, R, L, C):
    return V0 * np.cos(omega * t) / np.sqrt(R ** 2 + (omega * L - 1.0 / (omega * C)) ** 2)


def wheatstone_voltage(U, R1, R2, R3):
    # second denominator (R2 + R3) as in the reference formula
    return U * (R2 / (R1 + R2) - R3 / (R2 + R3))


def _sample_box(ranges: dict, n: int, rng) -> np.ndarray:
    return np.column_stack([rng.uniform(lo, hi, size=n) for lo, hi in ranges.values()])


def _check_n(n):
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")


def gen_rcl(n: int, seed: int = 0, noise: float = 0.1) -> Dataset:
    _check_n(n)
    rng = np.random.default_rng(seed)
    X = _sample_box(RCL_RANGES, n, rng)
    y = rcl_current(*X.T) + noise * rng.standard_normal(n)
    return Dataset(X, y, list(RCL_RANGES), f"rcl(n={n},seed={seed})",
                   {"generator": "rcl", "seed": seed, "noise": noise})


def gen_wheatstone(n: int, seed: int = 0, noise: float = 0.1) -> Dataset:
    _check_n(n)
    rng = np.random.default_rng(seed)
    X = _sample_box(WSB_RANGES, n, rng)
    y = wheatstone_voltage(*X.T) + noise * rng.standard_normal(n)
    return Dataset(X, y, list(WSB_RANGES), f"wsb(n={n},seed={seed})",
                   {"generator": "wsb", "seed": seed, "noise": noise})


def ising_energy(spins) -> np.ndarray:
    """Nearest-neighbour energy -sum_<ij> s_i s_j with periodic boundaries.

    Accepts one lattice ``(L, L)`` or a stack ``(m, L, L)``.
    """
    s = np.asarray(spins, dtype=np.float64)
    right = np.roll(s, -1, axis=-1)
    down = np.roll(s, -1, axis=-2)
    return -np.sum(s * right + s * down, axis=(-2, -1))


def gen_ising(n: int, lattice_size: int = 20, seed: int = 0) -> Dataset:
    """Uniform random spin configurations, flattened, with their energies."""
    _check_n(n)
    rng = np.random.default_rng(seed)
    spins = rng.choice(np.array([-1.0, 1.0]), size=(n, lattice_size, lattice_size))
    y = ising_energy(spins)
    names = [f"s{r}_{c}" for r in range(lattice_size) for c in range(lattice_size)]
    return Dataset(spins.reshape(n, -1), y, names, f"ising(n={n},L={lattice_size},seed={seed})",
                   {"generator": "ising", "seed": seed, "lattice_size": lattice_size})


GENERATORS = {
    "rp": gen_random_polynomial,
    "rcl": gen_rcl,
    "wsb": gen_wheatstone,
    "ising": gen_ising,
}


def generate(name: str, n: int, seed: int = 0, **params) -> Dataset:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(n, seed=seed, **params)
