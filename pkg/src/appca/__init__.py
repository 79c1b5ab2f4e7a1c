"""Adaptive probabilistic PCA: an Indian-buffet latent feature model over
orthogonal 1-D subspaces, with collapsed and hybrid Gibbs samplers."""

__version__ = "0.1.0"

from .model import (
    FeatureAssignments,
    Hyperparameters,
    LatentCoefficients,
    ModelState,
    ObservationSet,
    ProjectionBasis,
    center_observations,
    dataset_log_marginal,
    marginal_log_likelihood_point,
    mean_absolute_error,
    point_log_likelihood,
    reconstruct,
)
from .samplers import FitResult, RunConfig, fit

__all__ = [
    "FeatureAssignments",
    "FitResult",
    "Hyperparameters",
    "LatentCoefficients",
    "ModelState",
    "ObservationSet",
    "ProjectionBasis",
    "RunConfig",
    "center_observations",
    "dataset_log_marginal",
    "fit",
    "marginal_log_likelihood_point",
    "mean_absolute_error",
    "point_log_likelihood",
    "reconstruct",
]
