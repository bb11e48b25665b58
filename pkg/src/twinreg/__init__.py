"""Twin neural network regression.

Learn pairwise target differences with one network, predict by averaging over
all training anchors, and read uncertainty off the self-consistency of the
pairwise predictions.
"""
from .baselines import AnnEnsemble, AnnModel, mc_dropout_predict, predict_ann, train_ann, train_ann_ensemble
from .data import (Dataset, Normalizer, SplitSpec, fit_normalizer, gen_ising, gen_random_polynomial, gen_rcl,
                   gen_wheatstone, load_csv, save_csv, split)
from .io import load_model, save_model
from .nn import LayerSpec, Network, mlp_layers
from .training import History, TrainConfig
from .twin import (FunctionTwin, PredictionBundle, TwinEnsemble, TwinModel, predict, predict_batch,
                   predict_ensemble, predict_one, train_twin, train_twin_ensemble)
from .uncertainty import consistency_report, fit_power_law, latent_distance, loop3_residual

__version__ = "0.1.0"
