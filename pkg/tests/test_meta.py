import math
import warnings

import numpy as np
import pytest

from bmasurv.families import FamilyKind, SurvivalDataset, sample_time
from bmasurv.meta import (
    MetaAnalyticPrior,
    StudyEstimate,
    StudyExcludedWarning,
    map_priors,
    meta_analyze,
    study_estimates,
)
from bmasurv.priors import LogNormal, Normal
from bmasurv.sampler import SamplerSettings

SETTINGS = SamplerSettings(seed=4)


def _mcse(fit, name="mu"):
    x = fit.parameter(name)
    return float(np.std(x, ddof=1)) / math.sqrt(fit.ess[name])


def single_arm(n, alpha, gamma, seed, family=FamilyKind.WEIBULL, cutoff=3000.0):
    rng = np.random.default_rng(seed)
    t = sample_time(family, alpha, gamma, rng, size=n)
    return SurvivalDataset(np.minimum(t, cutoff), t <= cutoff, np.zeros(n, dtype=np.int8))


def test_exponential_study_estimate():
    # 100 events, total time 1e5 days: alpha-hat = log(1000), SE = 0.1
    t = np.full(100, 1000.0)
    d = SurvivalDataset(t, np.ones(100, bool), np.zeros(100, int))
    alphas, lg = study_estimates("exponential", [d])
    assert lg == []
    assert alphas[0].estimate == pytest.approx(math.log(1000.0), abs=1e-7)
    assert alphas[0].standard_error == pytest.approx(0.1, rel=1e-4)


def test_k_studies_give_k_estimates():
    data = [single_arm(300, 7.5 + 0.2 * k, 1.2, k) for k in range(4)]
    a, g = study_estimates("weibull", data)
    assert len(a) == len(g) == 4
    assert all(isinstance(e, StudyEstimate) for e in a + g)


def test_failed_study_is_excluded():
    good = single_arm(300, 7.5, 1.2, 0)
    no_events = SurvivalDataset([10.0, 20.0], [0, 0], [0, 0])
    with pytest.warns(StudyExcludedWarning):
        a, g = study_estimates("weibull", [good, no_events])
    assert len(a) == 1 and len(g) == 1


def test_study_estimates_recover_truth():
    hits = 0
    for k in range(20):
        a, g = study_estimates("weibull", [single_arm(5000, 7.8, 1.3, 100 + k)])
        hits += abs(a[0].estimate - 7.8) < 3 * a[0].standard_error
        hits += abs(g[0].estimate - math.log(1.3)) < 3 * g[0].standard_error
    assert hits >= 36


def test_tau_zero_equal_ses_gives_arithmetic_mean():
    est = [StudyEstimate(v, 0.2) for v in (7.9, 8.3, 8.6)]
    m = meta_analyze(est, SETTINGS, fix_tau_zero=True)
    assert abs(m.pooled_mean - np.mean([7.9, 8.3, 8.6])) < 3 * _mcse(m.fit)
    assert m.tau == 0.0


def test_tau_zero_unequal_ses_gives_inverse_variance_mean():
    vals = np.array([7.9, 8.3, 8.6, 8.0])
    ses = np.array([0.1, 0.3, 0.2, 0.5])
    m = meta_analyze([StudyEstimate(v, s) for v, s in zip(vals, ses)], SETTINGS, fix_tau_zero=True)
    w = 1 / ses**2
    iv = float(np.sum(w * vals) / np.sum(w))
    assert abs(m.pooled_mean - iv) < 3 * _mcse(m.fit)
    # the posterior sd of mu approaches the inverse-variance SE (the Cauchy(0, 100) prior is flat here)
    assert m.pooled_se == pytest.approx(1 / math.sqrt(w.sum()), rel=0.05)


def test_single_study_predictive_is_wider():
    m = meta_analyze([StudyEstimate(8.0, 0.15)], SETTINGS)
    assert m.predictive_sd >= 0.15
    assert isinstance(m.predictive, Normal)


def test_variance_identity_and_kinds():
    est = [StudyEstimate(v, s) for v, s in ((-0.1, 0.05), (0.05, 0.04), (-0.2, 0.06))]
    m = meta_analyze(est, SETTINGS, log_scale=True)
    assert isinstance(m, MetaAnalyticPrior)
    assert isinstance(m.predictive, LogNormal)
    assert m.predictive.sigma_log ** 2 == pytest.approx(m.pooled_se**2 + m.tau**2, rel=1e-15)
    assert m.predictive.mu_log == m.pooled_mean


def test_no_studies():
    with pytest.raises(ValueError):
        meta_analyze([], SETTINGS)


def test_map_pipeline_sanity():
    truth = (8.0, 8.4, 8.9)
    hist = [single_arm(600, a, math.exp(-0.1), 10 + i, cutoff=3650.0) for i, a in enumerate(truth)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = map_priors(hist, [FamilyKind.EXPONENTIAL, FamilyKind.WEIBULL, FamilyKind.LOGNORMAL], SETTINGS)
    for fam, (a, g) in out.items():
        assert isinstance(a.predictive, Normal)
        assert abs(a.pooled_mean - np.mean(truth)) < 1.0, fam
        assert (g is None) == (not fam.has_aux)
        if g is not None:
            assert isinstance(g.predictive, LogNormal)
