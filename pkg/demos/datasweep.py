"""
Accuracy versus training-set size
=================================

Repeat random splits of the random polynomial data at a few sizes and
compare twin and single-network test errors.  Takes a few minutes.
"""

import logging

from twinreg.experiments import ExperimentConfig, run_datasweep

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = ExperimentConfig(
    methods=["tnn", "ann"],
    repetitions=3,
    train={"patience": 10, "max_epochs": 60},
    # cap a pair epoch at 5000 batches; sample epochs keep the default patience
    overrides={"tnn": {"steps_per_epoch": 5000}, "ann": {"patience": 50, "max_epochs": 2000}},
)
report, timings = run_datasweep(cfg, [100, 300, 1000])

print(f"{'n':>6} {'TNN':>16} {'ANN':>16}")
for row in report["rows"]:
    cells = [row["summary"][m]["test"] for m in ("tnn", "ann")]
    print(f"{row['n']:>6} " + " ".join(f"{c['mean']:.4f} +- {c['stderr']:.4f}" for c in cells))
