"""Command-line front end: ``twinreg <command> [options]``.

Commands: generate, train, eval, benchmark, datasweep, uncertainty.
Experiment options come from an optional JSON ``--config`` file; flags given
on the command line override it.  Outputs go to ``--output`` or, by default,
to ``$TWINREG_OUTPUT_DIR`` (current directory when unset).

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, experiments, io, twin
from .data import DataError, GENERATORS, generate, save_csv, split
from .experiments import ExperimentConfig
from .io import ModelFormatError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
OUTPUT_ENV = "TWINREG_OUTPUT_DIR"

log = logging.getLogger("twinreg")


class UsageError(ValueError):
    pass


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "."))


def _out_path(args, default_name: str) -> Path:
    path = Path(args.output) if args.output else output_dir() / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--generator", choices=sorted(GENERATORS))
    p.add_argument("--data", help="CSV dataset path (instead of a generator)")
    p.add_argument("--target", help="target column of --data")
    p.add_argument("--n", type=int, help="generated dataset size")
    p.add_argument("--data-seed", type=int, help="generator seed")
    p.add_argument("--method", action="append", choices=experiments.METHODS)
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--hidden", type=_int_list, help="hidden layer widths, e.g. 64,64")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--l2", type=float, dest="l2_penalty")
    p.add_argument("--dropout", type=float, dest="dropout_rate")
    p.add_argument("--patience", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--steps-per-epoch", type=int)
    p.add_argument("--optimizer", choices=["adadelta", "rmsprop"])
    p.add_argument("--ensemble-size", type=int)
    p.add_argument("--mc-samples", type=int)
    p.add_argument("--split", choices=["random", "threshold"])
    p.add_argument("-o", "--output", help="output file")


def build_config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {args.config}: {err}") from None
    dataset = dict(doc.get("dataset", {"generator": "rp", "n": 1000, "seed": 0}))
    if args.data:
        dataset = {"path": args.data, "target": args.target or dataset.get("target", "y")}
    elif args.generator:
        dataset = {"generator": args.generator, "n": dataset.get("n", 1000), "seed": dataset.get("seed", 0)}
    if args.n is not None:
        dataset["n"] = args.n
    if args.data_seed is not None:
        dataset["seed"] = args.data_seed
    if args.target and "path" in dataset:
        dataset["target"] = args.target
    doc["dataset"] = dataset
    if args.method:
        doc["methods"] = args.method
    for key in ("repetitions", "seed", "hidden"):
        if getattr(args, key) is not None:
            doc[key] = getattr(args, key)
    if args.ensemble_size is not None:
        doc["ensemble_size"] = args.ensemble_size
    if args.mc_samples is not None:
        doc["mc_samples"] = args.mc_samples
    if args.split == "threshold":
        doc["split"] = {"kind": "threshold", "fractions": [0.5, 0.1, 0.15], "out_fraction": 0.25}
    elif args.split == "random":
        doc["split"] = {"kind": "random", "fractions": [0.9, 0.05, 0.05]}
    train = dict(doc.get("train", {}))
    for key in ("batch_size", "l2_penalty", "dropout_rate", "patience", "max_epochs",
                "steps_per_epoch", "optimizer"):
        if getattr(args, key) is not None:
            train[key] = getattr(args, key)
    doc["train"] = train
    try:
        return ExperimentConfig.from_dict(doc)
    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid config: {err}") from None


# -- commands ----------------------------------------------------------------

def cmd_generate(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    ds = generate(args.generator, args.n, seed=args.seed)
    path = _out_path(args, f"{args.generator}_n{args.n}_seed{args.seed}.csv")
    save_csv(ds, path, sidecar={"generator": args.generator, "seed": args.seed, "n": args.n})
    print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args)
    method = cfg.methods[0]
    if method not in ("tnn", "ann", "mc_dropout"):
        raise UsageError("train supports methods tnn, ann and mc_dropout")
    dataset = experiments.load_dataset(cfg.dataset)
    seed = experiments.derive_seed(cfg.seed, 0)
    parts = split(dataset, cfg.split_spec(seed))
    tc = cfg.train_config(method, experiments.method_seed_for(seed, method))
    if method == "tnn":
        model, history = twin.train_twin(parts["train"], parts["val"], cfg.hidden, tc)
    else:
        model, history = baselines.train_ann(parts["train"], parts["val"], cfg.hidden, tc)
    path = _out_path(args, f"{method}_model.json")
    io.save_model(model, path, extra={"config": cfg.to_dict(), "split_seed": seed})
    hist_path = path.with_name(path.stem + ".history.csv")
    with open(hist_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"])
        writer.writeheader()
        writer.writerow({"epoch": 0, "train_loss": "", "val_loss": repr(history.initial_val_loss)})
        for row in history.rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    print(json.dumps({"model": str(path), "history": str(hist_path), "epochs": history.epochs,
                      "best_epoch": history.best_epoch, "initial_val_loss": history.initial_val_loss,
                      "best_val_loss": min(history.val_loss, default=history.initial_val_loss)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    model = io.load_model(args.model)
    cfg = build_config(args)
    dataset = experiments.load_dataset(cfg.dataset)
    rows = []
    if isinstance(model, twin.TwinModel):
        bundles = twin.predict_batch(model, dataset.X)
        pred = np.array([b.mean for b in bundles])
        spread = np.array([b.std for b in bundles])
        sym = np.array([b.sigma_sym for b in bundles])
        for k in range(dataset.n):
            rows.append({"y": dataset.y[k], "pred": pred[k], "sigma_pred": spread[k], "sigma_sym": sym[k]})
    else:
        pred = baselines.predict_ann(model, dataset.X)
        for k in range(dataset.n):
            rows.append({"y": dataset.y[k], "pred": pred[k]})
    path = _out_path(args, "predictions.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(v)) for k, v in row.items()})
    print(json.dumps({"rmse": twin.rmse(pred, dataset.y), "n": dataset.n, "predictions": str(path)}))
    return EXIT_OK


def _write_report(args, name, report, meta) -> Path:
    path = _out_path(args, f"{name}_report.json")
    write_json(path, report)
    write_json(path.with_name(path.stem + ".meta.json"), meta)
    return path


def cmd_benchmark(args) -> int:
    cfg = build_config(args)
    report, meta = experiments.run_benchmark(cfg)
    path = _write_report(args, "benchmark", report, meta)
    print(json.dumps({"report": str(path), "summary": report["summary"]}, sort_keys=True))
    return EXIT_NUMERICAL if report["failed"] == cfg.repetitions else EXIT_OK


def cmd_datasweep(args) -> int:
    cfg = build_config(args)
    report, meta = experiments.run_datasweep(cfg, args.sizes)
    path = _write_report(args, "datasweep", report, meta)
    print(json.dumps({"report": str(path)}))
    return EXIT_NUMERICAL if report["failed"] == report["total"] else EXIT_OK


def cmd_uncertainty(args) -> int:
    cfg = build_config(args)
    if cfg.split.get("kind") != "threshold":
        cfg.split = {"kind": "threshold", "fractions": [0.5, 0.1, 0.15], "out_fraction": 0.25}
    report, records, meta = experiments.run_uncertainty(cfg)
    path = _write_report(args, "uncertainty", report, meta)
    for method, rows in records.items():
        with open(path.with_name(f"{path.stem}.{method}.csv"), "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    print(json.dumps({"report": str(path)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twinreg", description="Twin neural network regression")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV + JSON sidecar")
    p.add_argument("generator", choices=sorted(GENERATORS))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model and save it with its loss history")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    p.add_argument("model")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="repeated random splits, RMSE mean and standard error")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("datasweep", help="test RMSE versus training-set size")
    _add_experiment_flags(p)
    p.add_argument("--sizes", type=_int_list)
    p.set_defaults(func=cmd_datasweep)

    p = sub.add_parser("uncertainty", help="error proxies on an extrapolation split")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_uncertainty)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"twinreg: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, FileNotFoundError) as err:
        print(f"twinreg: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except experiments.NUMERICAL_ERRORS as err:
        print(f"twinreg: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"twinreg: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
