"""Meta-analytic predictive priors from historical participant-level data.

Each historical study is fitted by maximum likelihood without the treatment
covariate. The intercepts (and the log auxiliary parameters) are pooled with a
normal random-effects model, and the predictive prior for a new study is
Normal(mu_hat, se(mu_hat)^2 + tau_hat^2), on the log scale for gamma.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .families import FamilyKind, SurvivalDataset
from .mle import fit_mle
from .priors import Cauchy, HalfCauchy, LogNormal, Normal, PriorSpec, Spike
from .sampler import PosteriorFit, SamplerSettings, meta_target, sample_target

log = logging.getLogger(__name__)

MU_PRIOR = Cauchy(0.0, 100.0)
TAU_PRIOR = HalfCauchy(10.0)


class StudyExcludedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StudyEstimate:
    estimate: float
    standard_error: float

    def __post_init__(self):
        if not (self.standard_error > 0 and math.isfinite(self.standard_error)):
            raise ValueError("standard_error must be positive and finite")
        if not math.isfinite(self.estimate):
            raise ValueError("estimate must be finite")


@dataclass(frozen=True, eq=False)
class MetaAnalyticPrior:
    pooled_mean: float
    pooled_se: float
    tau: float
    predictive: PriorSpec
    fit: PosteriorFit | None = None

    @property
    def predictive_sd(self) -> float:
        return math.sqrt(self.pooled_se**2 + self.tau**2)


def study_estimates(family, historical: Sequence[SurvivalDataset]) -> tuple[list[StudyEstimate], list[StudyEstimate]]:
    """Per-study (alpha, log gamma) ML estimates; the second list is empty for the exponential."""
    family = FamilyKind.parse(family)
    alphas, log_gammas = [], []
    for k, data in enumerate(historical):
        try:
            fit = fit_mle(family, data, include_treatment=False)
            if fit.standard_errors is None:
                raise ValueError("singular Hessian")
            a = StudyEstimate(fit.estimates.alpha, fit.standard_errors["alpha"])
            g = StudyEstimate(math.log(fit.estimates.gamma), fit.log_gamma_se) if family.has_aux else None
        except (ValueError, ArithmeticError) as exc:
            warnings.warn(f"study {k}: excluded ({exc})", StudyExcludedWarning, stacklevel=2)
            continue
        alphas.append(a)
        if g is not None:
            log_gammas.append(g)
    return alphas, log_gammas


def meta_analyze(
    estimates: Sequence[StudyEstimate],
    settings: SamplerSettings = SamplerSettings(),
    log_scale: bool = False,
    fix_tau_zero: bool = False,
    prior_mu: PriorSpec = MU_PRIOR,
    prior_tau: PriorSpec = TAU_PRIOR,
) -> MetaAnalyticPrior:
    """Random-effects pooling, theta_k ~ Normal(mu, se_k^2 + tau^2).

    Posterior means of mu and tau are plugged into the predictive prior;
    ``log_scale`` returns a LogNormal (for auxiliary parameters) instead of a
    Normal. ``fix_tau_zero`` gives the common-effect model.
    """
    if len(estimates) == 0:
        raise ValueError("at least one study estimate is needed")
    est = np.array([e.estimate for e in estimates])
    se = np.array([e.standard_error for e in estimates])
    tau_prior = Spike(0.0) if fix_tau_zero else prior_tau
    target = meta_target(est, se, prior_mu, tau_prior)
    w = 1.0 / se**2
    init = {"mu": float(np.sum(w * est) / np.sum(w)), "tau": float(max(np.std(est), 0.1 * se.min()))}
    fit = sample_target(target, [("mu", prior_mu), ("tau", tau_prior)], settings, init=init)
    mu = fit.parameter("mu")
    pooled_mean = float(np.mean(mu))
    pooled_se = float(np.std(mu, ddof=1))
    tau = float(np.mean(fit.parameter("tau")))
    sd = math.sqrt(pooled_se**2 + tau**2)
    predictive = LogNormal(pooled_mean, sd) if log_scale else Normal(pooled_mean, sd)
    return MetaAnalyticPrior(pooled_mean, pooled_se, tau, predictive, fit)


def map_priors(
    historical: Sequence[SurvivalDataset],
    families: Sequence[FamilyKind] | None = None,
    settings: SamplerSettings = SamplerSettings(),
) -> dict[FamilyKind, tuple[MetaAnalyticPrior, MetaAnalyticPrior | None]]:
    """Intercept and auxiliary predictive priors for each family."""
    fams = list(families) if families is not None else list(FamilyKind)
    out = {}
    for fam in fams:
        alphas, log_gammas = study_estimates(fam, historical)
        a = meta_analyze(alphas, settings)
        g = meta_analyze(log_gammas, settings, log_scale=True) if fam.has_aux else None
        out[fam] = (a, g)
    return out
