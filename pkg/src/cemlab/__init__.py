"""Entropy-regularized split-inference training with inversion-robustness
bounds and adversarial evaluation."""

__version__ = "0.1.0"

from .bounds import (
    BoundsReport,
    JointGaussianSpec,
    NoiseModel,
    cem_loss,
    cem_loss_grad,
    cond_entropy_lower,
    gaussian_entropy,
    mi_upper_bound,
    minimal_mse_oracle,
    mixture_entropy_upper,
    mse_floor,
)
from .data import Dataset, load_csv, synth_blobs
from .mixture import (
    BatchAssignment,
    GaussianComponent,
    GaussianMixture,
    assign_nearest,
    fit_init,
    posterior_utility,
    update_covariance,
    update_weights,
)
from .numerics import Covariance, McEstimate, gaussian_logpdf, logdet, mc_entropy, trace
from .trainer import LossBreakdown, TrainingConfig, evaluate_utility, train

__all__ = [
    "BatchAssignment",
    "BoundsReport",
    "Covariance",
    "Dataset",
    "GaussianComponent",
    "GaussianMixture",
    "JointGaussianSpec",
    "LossBreakdown",
    "McEstimate",
    "NoiseModel",
    "TrainingConfig",
    "assign_nearest",
    "cem_loss",
    "cem_loss_grad",
    "cond_entropy_lower",
    "evaluate_utility",
    "fit_init",
    "gaussian_entropy",
    "gaussian_logpdf",
    "load_csv",
    "logdet",
    "mc_entropy",
    "mi_upper_bound",
    "minimal_mse_oracle",
    "mixture_entropy_upper",
    "mse_floor",
    "posterior_utility",
    "synth_blobs",
    "trace",
    "train",
    "update_covariance",
    "update_weights",
]
