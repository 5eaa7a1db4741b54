"""Bayesian model-averaged parametric survival analysis.

Estimation, testing and sequential monitoring with ensembles of accelerated
failure time models, marginal likelihoods by bridge sampling, meta-analytic
predictive priors and Bayes factor design analysis.
"""
__version__ = "0.1.0"

from ._backend import name as backend_name
from .ensemble import (
    EnsembleResult,
    bayes_factor,
    estimation_ensemble,
    fit_ensemble,
    inclusion_bf,
    mixture_posterior_beta,
    model_averaged_hazard,
    model_averaged_survival,
    posterior_model_probs,
    testing_ensemble,
)
from .families import FamilyKind, ParamVector, SurvivalDataset, log_hazard, log_likelihood, log_survival
from .priors import Cauchy, HalfCauchy, LogNormal, ModelSpec, Normal, Spike, TruncatedNormal
from .sampler import PosteriorFit, SamplerSettings, sample_posterior

__all__ = [
    "Cauchy",
    "EnsembleResult",
    "FamilyKind",
    "HalfCauchy",
    "LogNormal",
    "ModelSpec",
    "Normal",
    "ParamVector",
    "PosteriorFit",
    "SamplerSettings",
    "Spike",
    "SurvivalDataset",
    "TruncatedNormal",
    "backend_name",
    "bayes_factor",
    "estimation_ensemble",
    "fit_ensemble",
    "inclusion_bf",
    "log_hazard",
    "log_likelihood",
    "log_survival",
    "mixture_posterior_beta",
    "model_averaged_hazard",
    "model_averaged_survival",
    "posterior_model_probs",
    "sample_posterior",
    "testing_ensemble",
]
