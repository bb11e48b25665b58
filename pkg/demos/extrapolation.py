"""
Self-consistency as an error signal
===================================

Hold out the largest 25% of targets, train on the rest, and compare how
the twin network's consistency measures behave inside and outside the
training range.
"""

import numpy as np

from twinreg import SplitSpec, TrainConfig, gen_random_polynomial, split
from twinreg.twin import predict, rmse, train_twin
from twinreg.uncertainty import consistency_reports, fit_power_law

data = gen_random_polynomial(1000, seed=0)
parts = split(data, SplitSpec.threshold(seed=1))
print({name: sub.n for name, sub in parts.items()})

config = TrainConfig(patience=10, max_epochs=60, steps_per_epoch=5000, rng_seed=0)
model, _ = train_twin(parts["train"], parts["val"], config=config)

rng = np.random.default_rng(0)
points = []
for name in ("train", "test_in", "test_out"):
    sub = parts[name]
    err = np.abs(predict(model, sub.X) - sub.y)
    reps = consistency_reports(model, sub.X, rng)
    sigma = np.array([r.sigma_pred for r in reps])
    print(f"{name:9s} RMSE {rmse(predict(model, sub.X), sub.y):.4f}  "
          f"median sigma_pred {np.median(sigma):.4f}  "
          f"median loop3 {np.median([r.loop3_residual for r in reps]):.4f}")
    if name != "train":
        points += list(zip(sigma, err))

# on log-log axes the error grows roughly as a power of sigma_pred
fit = fit_power_law(points)
print(f"|error| ~ {fit.a:.3g} * sigma_pred^{fit.alpha:.2f}  (+- {fit.alpha_stderr:.2f})")
