"""Entropy-driven selective recruitment for survival trials."""

from infotrial.model import (
    Dataset,
    Hyperparameters,
    MapFit,
    Observation,
    ParameterPoint,
    hazard,
    log_likelihood,
    log_posterior,
    log_posterior_grad,
    map_estimate,
    predictive_mean_time,
)
from infotrial.variational import (
    VariationalFit,
    VariationalParams,
    expected_exp_beta_x,
    fit_variational,
    kl_divergence,
    kl_gradient,
    variational_entropy,
)

__all__ = [
    "Dataset",
    "Hyperparameters",
    "MapFit",
    "Observation",
    "ParameterPoint",
    "VariationalFit",
    "VariationalParams",
    "expected_exp_beta_x",
    "fit_variational",
    "hazard",
    "kl_divergence",
    "kl_gradient",
    "log_likelihood",
    "log_posterior",
    "log_posterior_grad",
    "map_estimate",
    "predictive_mean_time",
    "variational_entropy",
]
