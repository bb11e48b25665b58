"""Repeated-split benchmarks, data-size sweeps and uncertainty studies.

Each runner returns a JSON-ready report dict whose content depends only on
the configuration and master seed.  Wall-clock timings are returned
separately so reports can be compared byte for byte.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines, twin
from .data import Dataset, DataError, SplitSpec, generate, load_csv, split
from .optim import NonFiniteGradientError
from .training import TrainConfig, TrainingDivergedError
from .twin import rmse
from .uncertainty import DegenerateFitError, consistency_reports, fit_power_law, latent_embedding, nearest_distance

log = logging.getLogger(__name__)

SCHEMA = "twinreg-report"
SCHEMA_VERSION = 1
METHODS = ("tnn", "tnn_ensemble", "ann", "ann_ensemble", "mc_dropout")
NUMERICAL_ERRORS = (TrainingDivergedError, NonFiniteGradientError, FloatingPointError)


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"generator": "rp", "n": 1000, "seed": 0})
    methods: list = field(default_factory=lambda: ["tnn"])
    hidden: list = field(default_factory=lambda: [64, 64])
    train: TrainConfig = field(default_factory=TrainConfig)
    # per-method TrainConfig overrides, e.g. {"tnn": {"steps_per_epoch": 10000}}
    overrides: dict = field(default_factory=dict)
    split: dict = field(default_factory=lambda: {"kind": "random", "fractions": [0.9, 0.05, 0.05]})
    repetitions: int = 20
    seed: int = 0
    ensemble_size: int = 20
    mc_samples: int = 100
    mc_rate: float = 0.1
    sizes: list = field(default_factory=lambda: [100, 300, 1000, 3000])

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.methods, str):
            self.methods = [self.methods]
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.ensemble_size < 1 or self.mc_samples < 2:
            raise ValueError("ensemble_size must be >= 1 and mc_samples >= 2")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "method" in doc:
            doc["methods"] = doc.pop("method")
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self, method: str, seed: int) -> TrainConfig:
        base = method.replace("_ensemble", "")
        changes = {**self.overrides.get(base, {}), **self.overrides.get(method, {}), "rng_seed": seed}
        if method == "mc_dropout" and not changes.get("dropout_rate"):
            changes["dropout_rate"] = self.mc_rate
        return self.train.replace(**changes)

    def split_spec(self, seed: int) -> SplitSpec:
        kind = self.split.get("kind", "random")
        if kind == "threshold":
            return SplitSpec.threshold(seed, tuple(self.split.get("fractions", (0.5, 0.1, 0.15))),
                                       self.split.get("out_fraction", 0.25))
        return SplitSpec("random", tuple(self.split.get("fractions", (0.9, 0.05, 0.05))), seed=seed)


def derive_seed(master: int, index: int) -> int:
    """Seed for repetition ``index``; depends only on (master, index)."""
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def method_seed_for(rep_seed: int, method: str) -> int:
    return derive_seed(rep_seed, METHODS.index(method) + 1)


def load_dataset(spec: dict, n: int | None = None) -> Dataset:
    spec = dict(spec)
    if "path" in spec:
        if "target" not in spec:
            raise DataError("dataset spec with a path needs a 'target' column")
        return load_csv(spec["path"], spec["target"])
    name = spec.pop("generator", None)
    if name is None:
        raise DataError("dataset spec needs either 'path' or 'generator'")
    size = n if n is not None else spec.pop("n", 1000)
    spec.pop("n", None)
    seed = spec.pop("seed", 0)
    return generate(name, size, seed=seed, **spec)


# -- fitting and prediction per method ---------------------------------------

def fit_method(method: str, parts: dict, cfg: ExperimentConfig, seed: int):
    tc = cfg.train_config(method, seed)
    train, val = parts["train"], parts["val"]
    if method == "tnn":
        return twin.train_twin(train, val, cfg.hidden, tc)[0]
    if method == "tnn_ensemble":
        return twin.train_twin_ensemble(train, val, cfg.ensemble_size, cfg.hidden, tc)
    if method in ("ann", "mc_dropout"):
        return baselines.train_ann(train, val, cfg.hidden, tc)[0]
    if method == "ann_ensemble":
        return baselines.train_ann_ensemble(train, val, cfg.ensemble_size, cfg.hidden, tc)
    raise ValueError(method)


def predict_method(method: str, model, X, cfg: ExperimentConfig, seed: int) -> np.ndarray:
    if method == "tnn":
        return twin.predict(model, X)
    if method == "tnn_ensemble":
        return twin.predict_ensemble_mean(model, X)
    if method == "ann":
        return baselines.predict_ann(model, np.atleast_2d(X))
    if method == "ann_ensemble":
        return model.predict(X)
    if method == "mc_dropout":
        return baselines.mc_dropout_predict(model, np.atleast_2d(X), cfg.mc_samples, cfg.mc_rate, seed)[0]
    raise ValueError(method)


def summarize(values) -> dict:
    values = [v for v in values if v is not None]
    out = {"n": len(values)}
    if values:
        out["mean"] = float(np.mean(values))
    if len(values) >= 2:
        out["stderr"] = float(np.std(values, ddof=1) / math.sqrt(len(values)))
    return out


def _header(command: str, cfg: ExperimentConfig) -> dict:
    return {"schema": SCHEMA, "schema_version": SCHEMA_VERSION, "command": command, "config": cfg.to_dict()}


# -- benchmark ---------------------------------------------------------------

def run_repetition(dataset: Dataset, cfg: ExperimentConfig, index: int, methods=None) -> dict:
    seed = derive_seed(cfg.seed, index)
    parts = split(dataset, cfg.split_spec(seed))
    result = {"index": index, "seed": seed, "sizes": {k: v.n for k, v in parts.items()}, "rmse": {}}
    for method in methods or cfg.methods:
        method_seed = method_seed_for(seed, method)
        model = fit_method(method, parts, cfg, method_seed)
        result["rmse"][method] = {name: rmse(predict_method(method, model, sub.X, cfg, method_seed), sub.y)
                                  for name, sub in parts.items()}
    return result


def _run_reps(dataset, cfg, methods=None):
    reps, timings = [], []
    for i in range(cfg.repetitions):
        t0 = time.perf_counter()
        try:
            rep = run_repetition(dataset, cfg, i, methods)
            rep["status"] = "ok"
        except Exception as err:  # recorded per repetition; the run continues
            log.warning("repetition %d failed: %s", i, err)
            rep = {"index": i, "seed": derive_seed(cfg.seed, i), "status": "failed",
                   "error": f"{type(err).__name__}: {err}"}
        reps.append(rep)
        timings.append(time.perf_counter() - t0)
        log.info("repetition %d done in %.1fs", i, timings[-1])
    return reps, timings


def _summary(reps, methods):
    ok = [r for r in reps if r["status"] == "ok"]
    summary = {}
    for method in methods:
        subsets = ok[0]["rmse"][method].keys() if ok else []
        summary[method] = {s: summarize([r["rmse"][method][s] for r in ok]) for s in subsets}
    return summary


def run_benchmark(cfg: ExperimentConfig, dataset: Dataset | None = None) -> tuple[dict, dict]:
    dataset = dataset if dataset is not None else load_dataset(cfg.dataset)
    reps, timings = _run_reps(dataset, cfg)
    report = _header("benchmark", cfg)
    report.update(dataset={"provenance": dataset.provenance, "n": dataset.n, "d": dataset.d},
                  repetitions=reps, summary=_summary(reps, cfg.methods),
                  failed=sum(r["status"] != "ok" for r in reps))
    return report, {"repetition_seconds": timings}


# -- data-size sweep -----------------------------------------------------------

def run_datasweep(cfg: ExperimentConfig, sizes=None) -> tuple[dict, dict]:
    sizes = list(sizes if sizes is not None else cfg.sizes)
    if sizes != sorted(sizes) or not sizes:
        raise ValueError("sizes must be a nonempty ascending list")
    if "generator" not in cfg.dataset:
        raise DataError("datasweep needs a generator dataset")
    methods = cfg.methods if cfg.methods != ["tnn"] else ["tnn", "ann"]
    rows, timings, failed = [], {}, 0
    for n in sizes:
        dataset = load_dataset(cfg.dataset, n=n)
        reps, t = _run_reps(dataset, cfg, methods)
        failed += sum(r["status"] != "ok" for r in reps)
        timings[str(n)] = t
        rows.append({"n": n, "repetitions": reps, "summary": _summary(reps, methods)})
    report = _header("datasweep", cfg)
    report.update(methods=methods, rows=rows, failed=failed,
                  total=len(sizes) * cfg.repetitions)
    return report, {"repetition_seconds": timings}


# -- uncertainty study ---------------------------------------------------------

ESTIMATORS = ("sigma_pred", "sigma_sym", "loop3", "latent_distance")


def _twin_records(model, parts, rng):
    records = []
    for name in ("train", "test_in", "test_out"):
        sub = parts[name]
        pred = twin.predict(model, sub.X)
        reports = consistency_reports(model, sub.X, rng)
        for k, rep in enumerate(reports):
            records.append({"subset": name, "index": k, "abs_error": abs(float(pred[k] - sub.y[k])),
                            "sigma_pred": rep.sigma_pred, "sigma_sym": rep.sigma_sym,
                            "loop3": rep.loop3_residual, "latent_distance": rep.latent_distance})
    return records


def _mc_records(model, parts, cfg, seed):
    ref = latent_embedding(model, parts["train"].X)
    records = []
    for name in ("train", "test_in", "test_out"):
        sub = parts[name]
        mean, std = baselines.mc_dropout_predict(model, sub.X, cfg.mc_samples, cfg.mc_rate, seed)
        dist = nearest_distance(latent_embedding(model, sub.X), ref)
        for k in range(sub.n):
            records.append({"subset": name, "index": k, "abs_error": abs(float(mean[k] - sub.y[k])),
                            "mc_std": float(std[k]), "latent_distance": float(dist[k])})
    return records


def _fits(records, estimators):
    fits = {}
    test = [r for r in records if r["subset"] != "train"]
    for est in estimators:
        try:
            fit = fit_power_law([(r[est], r["abs_error"]) for r in test if r[est] is not None])
            fits[est] = {"a": fit.a, "alpha": fit.alpha, "alpha_stderr": fit.alpha_stderr,
                         "residual": fit.residual, "n_points": fit.n_points}
        except DegenerateFitError as err:
            fits[est] = {"degenerate": str(err)}
    return fits


def _subset_table(records, estimators):
    table = {}
    for name in ("train", "test_in", "test_out"):
        rows = [r for r in records if r["subset"] == name]
        errs = np.array([r["abs_error"] for r in rows])
        entry = {"n": len(rows), "rmse": float(np.sqrt(np.mean(errs ** 2)))}
        for est in estimators:
            vals = [r[est] for r in rows if r[est] is not None]
            entry[f"median_{est}"] = float(np.median(vals)) if vals else None
        table[name] = entry
    return table


def run_uncertainty(cfg: ExperimentConfig, dataset: Dataset | None = None) -> tuple[dict, dict, dict]:
    """Train on a target-threshold split and relate error proxies to errors.

    Returns ``(report, records, timings)``; ``records`` maps method name to the
    per-point rows (one per train / test_in / test_out point).
    """
    if cfg.split.get("kind") != "threshold":
        raise ValueError("uncertainty study needs a threshold split")
    dataset = dataset if dataset is not None else load_dataset(cfg.dataset)
    seed = derive_seed(cfg.seed, 0)
    parts = split(dataset, cfg.split_spec(seed))
    t0 = time.perf_counter()
    timings, records, results = {}, {}, {}
    methods = [m for m in cfg.methods if m in ("tnn", "mc_dropout")] or ["tnn"]
    for method in methods:
        method_seed = method_seed_for(seed, method)
        model = fit_method(method, parts, cfg, method_seed)
        if method == "tnn":
            rows = _twin_records(model, parts, np.random.default_rng(method_seed))
            estimators = ESTIMATORS
        else:
            rows = _mc_records(model, parts, cfg, method_seed)
            estimators = ("mc_std", "latent_distance")
        records[method] = rows
        results[method] = {"subsets": _subset_table(rows, estimators), "fits": _fits(rows, estimators)}
        timings[method] = time.perf_counter() - t0
    report = _header("uncertainty", cfg)
    report.update(seed=seed, sizes={k: v.n for k, v in parts.items()}, results=results)
    return report, records, {"seconds": timings}
