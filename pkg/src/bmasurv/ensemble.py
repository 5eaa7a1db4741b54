"""Bayesian model averaging over parametric families.

Posterior model probabilities, Bayes factors, inclusion Bayes factors for
any subset of the model space, the model-averaged posterior of the treatment
effect, and model-averaged survival and hazard curves.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import bridge
from .families import FamilyKind, SurvivalDataset, log_density, log_survival
from .priors import LogNormal, ModelSpec, Normal, Spike, TruncatedNormal
from .sampler import PosteriorFit, SamplerSettings, sample_posterior
from .seeding import derive_seed

log = logging.getLogger(__name__)


class DegenerateBayesFactorWarning(RuntimeWarning):
    """An inclusion Bayes factor is 0 or infinite because a posterior mass is exactly 0."""


class EnsembleError(RuntimeError):
    pass


# ---------------------------------------------------------------- probabilities


def posterior_model_probs(prior_probs, log_mls) -> np.ndarray:
    """Posterior model probabilities, normalized with log-sum-exp."""
    prior = np.asarray(prior_probs, dtype=np.float64)
    lml = np.asarray(log_mls, dtype=np.float64)
    if prior.shape != lml.shape:
        raise ValueError("prior_probs and log_mls must have the same length")
    if abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError("prior model probabilities must sum to 1")
    with np.errstate(divide="ignore"):
        lw = np.log(prior) + lml
    if not np.any(np.isfinite(lw)) and not np.any(lw == np.inf):
        raise EnsembleError("every model has zero marginal likelihood")
    if np.any(lw == np.inf):
        raise EnsembleError("infinite marginal likelihood")
    post = np.exp(lw - logsumexp(lw))
    return post / post.sum()


def bayes_factor(log_ml_1: float, log_ml_0: float) -> float:
    """BF_10 = p(data | M1) / p(data | M0)."""
    return math.exp(log_ml_1 - log_ml_0)


def _subset_mask(n: int, subset) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    idx = np.asarray(list(subset), dtype=int)
    if idx.size == 0:
        raise ValueError("subset must be non-empty")
    mask[idx] = True
    if mask.all():
        raise ValueError("subset must be a proper subset of the models")
    return mask


def inclusion_bf(prior_probs, posterior_probs, subset) -> float:
    """Posterior inclusion odds of ``subset`` divided by its prior inclusion odds.

    Returns ``inf`` or ``0.0`` (with a DegenerateBayesFactorWarning) when the
    posterior mass of the subset or its complement is exactly zero.
    """
    prior = np.asarray(prior_probs, dtype=np.float64)
    post = np.asarray(posterior_probs, dtype=np.float64)
    mask = _subset_mask(prior.shape[0], subset)
    post_in, post_out = post[mask].sum(), post[~mask].sum()
    prior_odds = prior[mask].sum() / prior[~mask].sum()
    if post_out == 0.0 or post_in == 0.0:
        warnings.warn("inclusion Bayes factor is degenerate (zero posterior mass)", DegenerateBayesFactorWarning,
                      stacklevel=2)
        return math.inf if post_out == 0.0 else 0.0
    return float(post_in / post_out / prior_odds)


def singleton_inclusion_bf(posterior_prob, prior_prob):
    """Inclusion BF of a single model from its prior and posterior probability.

    Plain arithmetic, so exact rational inputs (``fractions.Fraction``) give an
    exact result; binary floats such as 0.95 carry representation error.
    """
    if not (0 < prior_prob < 1 and 0 <= posterior_prob <= 1):
        raise ValueError("probabilities must lie in [0, 1] with the prior strictly inside")
    if posterior_prob == 1:
        return math.inf
    return (posterior_prob / (1 - posterior_prob)) / (prior_prob / (1 - prior_prob))


def log_inclusion_bf(prior_probs, log_mls, subset) -> float:
    """log inclusion BF computed from marginal likelihoods, free of underflow."""
    prior = np.asarray(prior_probs, dtype=np.float64)
    lml = np.asarray(log_mls, dtype=np.float64)
    mask = _subset_mask(prior.shape[0], subset)
    lw = np.log(prior) + lml
    num = logsumexp(lw[mask]) - logsumexp(lw[~mask])
    return float(num - (math.log(prior[mask].sum()) - math.log(prior[~mask].sum())))


# ---------------------------------------------------------------- mixtures


@dataclass(frozen=True, eq=False)
class WeightedDraws:
    values: np.ndarray
    weights: np.ndarray

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def var(self) -> float:
        m = self.mean()
        return float(np.dot(self.weights, (self.values - m) ** 2))

    def quantile(self, q):
        return weighted_quantile(self.values, self.weights, q)

    def summary(self) -> dict[str, float]:
        lo, med, hi = self.quantile([0.025, 0.5, 0.975])
        return {"mean": self.mean(), "sd": math.sqrt(self.var()), "median": float(med),
                "q025": float(lo), "q975": float(hi)}


def weighted_quantile(values, weights, q):
    """Inverse of the weighted empirical CDF: smallest value with cumulative weight >= q."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    v = values[order]
    cw = np.cumsum(weights[order])
    cw /= cw[-1]
    qs = np.atleast_1d(np.asarray(q, dtype=np.float64))
    idx = np.searchsorted(cw, qs - 1e-12 * (qs > 0), side="left")
    out = v[np.minimum(idx, v.size - 1)]
    return float(out[0]) if np.ndim(q) == 0 else out


def mixture_posterior_beta(fits: Sequence[PosteriorFit], posterior_probs) -> WeightedDraws:
    """Pool beta draws with weight p_d / n_d, so each model carries its posterior probability."""
    probs = np.asarray(posterior_probs, dtype=np.float64)
    if len(fits) != probs.shape[0]:
        raise ValueError("one posterior probability per fit is required")
    vals, wts = [], []
    for fit, p in zip(fits, probs):
        if "beta" not in fit.free_parameter_names:
            raise ValueError(f"{getattr(fit.model, 'name', 'model')}: beta is fixed; not an estimation model")
        b = fit.parameter("beta")
        vals.append(b)
        wts.append(np.full(b.shape[0], p / b.shape[0]))
    return WeightedDraws(np.concatenate(vals), np.concatenate(wts))


# ---------------------------------------------------------------- curves


@dataclass(frozen=True, eq=False)
class CurveSummary:
    times: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def _draw_curves(fit: PosteriorFit, times: np.ndarray, treatment: int, what: str) -> np.ndarray:
    fam = fit.model.family
    beta = fit.parameter("beta")
    alpha = fit.parameter("alpha")
    gamma = fit.parameter("gamma") if fam.has_aux else None
    eta = alpha + beta * treatment
    out = np.empty((beta.shape[0], times.shape[0]))
    for i in range(beta.shape[0]):
        g = None if gamma is None else gamma[i]
        ls = log_survival(fam, times, eta[i], g)
        if what == "survival":
            out[i] = np.exp(ls)
        else:
            out[i] = np.exp(log_density(fam, times, eta[i], g) - ls)
    return out


def _averaged(times, fits, posterior_probs, treatment, what, level=0.95):
    times = np.asarray(times, dtype=np.float64)
    if np.any(~(times > 0)):
        raise ValueError("time grid must be positive")
    if treatment not in (0, 1):
        raise ValueError("treatment must be 0 or 1")
    probs = np.asarray(posterior_probs, dtype=np.float64)
    mean = np.zeros(times.shape[0])
    blocks, wts = [], []
    for fit, p in zip(fits, probs):
        curves = _draw_curves(fit, times, treatment, what)
        mean += p * curves.mean(axis=0)
        blocks.append(curves)
        wts.append(np.full(curves.shape[0], p / curves.shape[0]))
    pooled = np.concatenate(blocks, axis=0)
    w = np.concatenate(wts)
    tail = 0.5 * (1.0 - level)
    lower = np.array([weighted_quantile(pooled[:, k], w, tail) for k in range(times.shape[0])])
    upper = np.array([weighted_quantile(pooled[:, k], w, 1.0 - tail) for k in range(times.shape[0])])
    return CurveSummary(times, mean, lower, upper)


def model_averaged_survival(times, fits, posterior_probs, treatment: int, level: float = 0.95) -> CurveSummary:
    """Probability-weighted average of each model's posterior-mean survival curve.

    Bands are central weighted quantiles of the pooled draw-level curves.
    """
    return _averaged(times, fits, posterior_probs, treatment, "survival", level)


def model_averaged_hazard(times, fits, posterior_probs, treatment: int, level: float = 0.95) -> CurveSummary:
    return _averaged(times, fits, posterior_probs, treatment, "hazard", level)


# ---------------------------------------------------------------- ensembles


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    models: list[ModelSpec]
    fits: list[PosteriorFit]
    prior_probs: np.ndarray
    posterior_probs: np.ndarray
    log_mls: np.ndarray
    inclusion_bf_effect: float | None
    per_family_inclusion_bf: dict[FamilyKind, float]
    per_model_inclusion_bf: np.ndarray

    @property
    def pairs(self) -> list[tuple[ModelSpec, PosteriorFit]]:
        return list(zip(self.models, self.fits))

    @property
    def effect_models(self) -> list[int]:
        return [i for i, m in enumerate(self.models) if m.assumes_effect]

    def family_posterior_probs(self) -> dict[FamilyKind, float]:
        out = {f: 0.0 for f in FamilyKind}
        for m, p in zip(self.models, self.posterior_probs):
            out[m.family] += float(p)
        return out

    def mixture_beta(self) -> WeightedDraws:
        """Model-averaged beta posterior over the models assuming an effect."""
        idx = [i for i in self.effect_models if "beta" in self.fits[i].free_parameter_names]
        if not idx:
            raise EnsembleError("no model with a free treatment effect")
        p = self.posterior_probs[idx]
        return mixture_posterior_beta([self.fits[i] for i in idx], p / p.sum())

    def survival(self, times, treatment: int, level: float = 0.95) -> CurveSummary:
        return model_averaged_survival(times, self.fits, self.posterior_probs, treatment, level)

    def hazard(self, times, treatment: int, level: float = 0.95) -> CurveSummary:
        return model_averaged_hazard(times, self.fits, self.posterior_probs, treatment, level)


def summarize(models: Sequence[ModelSpec], fits: Sequence[PosteriorFit]) -> EnsembleResult:
    """Aggregate fitted models (each with ``log_marglik`` set) into an EnsembleResult."""
    prior = np.array([m.prior_weight for m in models], dtype=np.float64)
    if abs(prior.sum() - 1.0) > 1e-9:
        raise ValueError("prior model weights must sum to 1")
    lml = np.array([f.log_marglik for f in fits], dtype=np.float64)
    post = posterior_model_probs(prior, lml)
    n = len(models)
    eff = [i for i, m in enumerate(models) if m.assumes_effect]
    bf_effect = math.exp(log_inclusion_bf(prior, lml, eff)) if 0 < len(eff) < n else None
    fam_bf = {}
    for fam in dict.fromkeys(m.family for m in models):
        idx = [i for i, m in enumerate(models) if m.family is fam]
        if len(idx) < n:
            fam_bf[fam] = math.exp(log_inclusion_bf(prior, lml, idx))
    per_model = np.array([math.exp(log_inclusion_bf(prior, lml, [i])) if n > 1 else 1.0 for i in range(n)])
    return EnsembleResult(list(models), list(fits), prior, post, lml, bf_effect, fam_bf, per_model)


def fit_model(model: ModelSpec, data: SurvivalDataset, settings: SamplerSettings, seed: int) -> PosteriorFit:
    """Sample one model and attach its bridge-sampled marginal likelihood."""
    fit = sample_posterior(model, data, settings.with_seed(derive_seed(seed, 0)))
    res = bridge.bridge_marglik(fit, seed=derive_seed(seed, 1))
    return bridge.with_marglik(fit, res)


def fit_ensemble(
    models: Sequence[ModelSpec],
    data: SurvivalDataset,
    settings: SamplerSettings = SamplerSettings(),
    seed: int | None = None,
    threads: int = 1,
) -> EnsembleResult:
    """Fit every model and combine them. Model ``i`` uses seed path (seed, i)."""
    seed = settings.seed if seed is None else seed
    jobs = [(m, derive_seed(seed, i)) for i, m in enumerate(models)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fits = list(pool.map(lambda job: fit_model(job[0], data, settings, job[1]), jobs))
    else:
        fits = [fit_model(m, data, settings, s) for m, s in jobs]
    return summarize(models, fits)


# ---------------------------------------------------------------- default ensembles

# Intercept and auxiliary priors per family: historical-data informed values.
TABLE1_PRIORS: dict[FamilyKind, tuple[Normal, LogNormal | None]] = {
    FamilyKind.EXPONENTIAL: (Normal(8.70, 2.04), None),
    FamilyKind.WEIBULL: (Normal(8.80, 2.20), LogNormal(-0.07, 0.22)),
    FamilyKind.LOGNORMAL: (Normal(8.70, 1.95), LogNormal(0.62, 0.25)),
    FamilyKind.LOGLOGISTIC: (Normal(8.54, 2.37), LogNormal(0.02, 0.27)),
    FamilyKind.GAMMA: (Normal(8.88, 2.05), LogNormal(-0.10, 0.39)),
}

ESTIMATION_BETA = Normal(0.0, 1.0)
TESTING_BETA = TruncatedNormal(0.3, 0.15, 0.0, math.inf)


def estimation_ensemble(families: Sequence[FamilyKind] | None = None, priors=None) -> list[ModelSpec]:
    """One effect model per family, beta ~ Normal(0, 1), equal prior weights."""
    priors = priors or TABLE1_PRIORS
    fams = list(families) if families is not None else list(FamilyKind)
    w = 1.0 / len(fams)
    return [ModelSpec(f, ESTIMATION_BETA, priors[f][0], priors[f][1], w) for f in fams]


def testing_ensemble(families: Sequence[FamilyKind] | None = None, priors=None,
                     effect_prior=TESTING_BETA) -> list[ModelSpec]:
    """Null (beta = 0) and effect variants for each family, equal prior weights."""
    priors = priors or TABLE1_PRIORS
    fams = list(families) if families is not None else list(FamilyKind)
    w = 1.0 / (2 * len(fams))
    null = [ModelSpec(f, Spike(0.0), priors[f][0], priors[f][1], w) for f in fams]
    alt = [ModelSpec(f, effect_prior, priors[f][0], priors[f][1], w) for f in fams]
    return null + alt
