import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from bmasurv.families import (
    DomainError,
    FamilyKind,
    ParamVector,
    SpecificationError,
    SurvivalDataset,
    log_density,
    log_hazard,
    log_likelihood,
    log_survival,
    quantile,
    sample_time,
)

AUX = [FamilyKind.WEIBULL, FamilyKind.LOGNORMAL, FamilyKind.LOGLOGISTIC, FamilyKind.GAMMA]


def scipy_dist(fam, eta, g):
    s = math.exp(eta)
    return {
        FamilyKind.EXPONENTIAL: stats.expon(scale=s),
        FamilyKind.WEIBULL: stats.weibull_min(g, scale=s),
        FamilyKind.LOGNORMAL: stats.lognorm(g, scale=s),
        FamilyKind.LOGLOGISTIC: stats.fisk(g, scale=s),
        FamilyKind.GAMMA: stats.gamma(g, scale=s),
    }[fam]


def gam(fam, g):
    return g if fam.has_aux else None


def test_five_members():
    assert len(FamilyKind) == 5
    assert [f.has_aux for f in FamilyKind] == [False, True, True, True, True]


@pytest.mark.parametrize("name,fam", [("Log-Normal", FamilyKind.LOGNORMAL), ("exp", FamilyKind.EXPONENTIAL),
                                      ("log_logistic", FamilyKind.LOGLOGISTIC), (4, FamilyKind.GAMMA)])
def test_parse(name, fam):
    assert FamilyKind.parse(name) is fam


def test_parse_unknown():
    with pytest.raises(ValueError):
        FamilyKind.parse("gompertz")


# ---------------------------------------------------------------- worked values


def test_log_survival_examples(backend):
    assert log_survival(FamilyKind.EXPONENTIAL, 1.0, 0.0) == pytest.approx(-1.0, abs=1e-15)
    assert log_survival(FamilyKind.WEIBULL, 2.0, 0.0, 1.0) == pytest.approx(-2.0, abs=1e-15)
    assert log_survival(FamilyKind.LOGLOGISTIC, 1.0, 0.0, 2.0) == pytest.approx(math.log(0.5), abs=1e-15)
    q = float(mpmath.log(mpmath.gammainc(2, 1.5, mpmath.inf, regularized=True)))
    assert log_survival(FamilyKind.GAMMA, 1.5, 0.0, 2.0) == pytest.approx(q, rel=1e-13)


def test_gamma_survival_against_quadrature(backend):
    tail = integrate.quad(lambda t: t * math.exp(-t), 1.5, np.inf, epsabs=0, epsrel=1e-13)[0]
    assert math.exp(log_survival(FamilyKind.GAMMA, 1.5, 0.0, 2.0)) == pytest.approx(tail, rel=1e-12)


def test_log_hazard_examples(backend):
    assert log_hazard(FamilyKind.EXPONENTIAL, 5.0, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert log_hazard(FamilyKind.EXPONENTIAL, 5.0, math.log(2)) == pytest.approx(math.log(0.5), abs=1e-14)
    assert log_hazard(FamilyKind.LOGNORMAL, 1.0, 0.0, 1.0) == pytest.approx(math.log(0.7978845608), abs=1e-10)


def test_quantile_examples(backend):
    assert quantile(FamilyKind.EXPONENTIAL, 0.5) == pytest.approx(math.log(2), rel=1e-14)
    assert quantile(FamilyKind.LOGLOGISTIC, 0.5, 0.0, 3.0) == pytest.approx(1.0, rel=1e-14)
    t = quantile(FamilyKind.GAMMA, 0.25, 0.0, 2.0)
    # bisection on the closed-form Q(2, t) = (1 + t) e^{-t}
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if (1 + mid) * math.exp(-mid) > 0.75 else (lo, mid)
    assert t == pytest.approx(0.5 * (lo + hi), rel=1e-10)


def test_log_likelihood_examples(backend):
    one = lambda e: SurvivalDataset([2.0], [e], [0])  # noqa: E731
    assert log_likelihood(one(False), "exponential", ParamVector(0.0, 0.0)) == pytest.approx(-2.0)
    assert log_likelihood(one(True), "exponential", ParamVector(0.0, 0.0)) == pytest.approx(-2.0)
    val = log_likelihood(one(True), "exponential", ParamVector(0.0, math.log(2)))
    assert val == pytest.approx(math.log(0.5) - 1.0, abs=1e-14)


def test_domain_errors():
    with pytest.raises(DomainError):
        log_survival(FamilyKind.EXPONENTIAL, 0.0)
    with pytest.raises(DomainError):
        log_survival(FamilyKind.WEIBULL, 1.0, 0.0, -1.0)
    with pytest.raises(SpecificationError):
        log_survival(FamilyKind.WEIBULL, 1.0, 0.0)
    with pytest.raises(DomainError):
        quantile(FamilyKind.EXPONENTIAL, 1.0)
    with pytest.raises(DomainError):
        SurvivalDataset([1.0, -2.0], [1, 0], [0, 1])
    with pytest.raises(ValueError):
        SurvivalDataset([1.0], [1], [2])


# ---------------------------------------------------------------- against scipy


@pytest.mark.parametrize("fam", list(FamilyKind))
@pytest.mark.parametrize("eta,g", [(0.0, 1.0), (7.5, 0.8), (-1.2, 2.5), (3.0, 0.35)])
def test_against_scipy(backend, fam, eta, g):
    dist = scipy_dist(fam, eta, g if fam.has_aux else 1.0)
    t = dist.ppf(np.array([1e-6, 0.01, 0.3, 0.5, 0.9, 0.999]))
    np.testing.assert_allclose(log_survival(fam, t, eta, gam(fam, g)), dist.logsf(t), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(log_density(fam, t, eta, gam(fam, g)), dist.logpdf(t), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(quantile(fam, np.array([0.01, 0.5, 0.99]), eta, gam(fam, g)),
                               dist.ppf([0.01, 0.5, 0.99]), rtol=1e-9)


def test_deep_tail_stays_finite(backend):
    # log S far in the tail: no underflow to -inf where the exact value is representable
    for fam in FamilyKind:
        v = log_survival(fam, 1e4, 0.0, gam(fam, 1.0))
        assert math.isfinite(v) and v < -5


# ---------------------------------------------------------------- properties

fams = st.sampled_from(list(FamilyKind))
gammas = st.floats(0.2, 5.0)
etas = st.floats(-3.0, 9.0)


@settings(max_examples=80, deadline=None)
@given(fam=fams, g=gammas, eta=etas, t=st.floats(1e-3, 1e4))
def test_aft_invariance(fam, g, eta, t):
    a = log_survival(fam, t, eta, gam(fam, g))
    b = log_survival(fam, t * math.exp(-eta), 0.0, gam(fam, g))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(fam=fams, g=gammas, eta=st.floats(-2.0, 3.0))
def test_survival_monotone_and_starts_at_one(fam, g, eta):
    t0 = quantile(fam, 1e-9, eta, gam(fam, g))
    t = np.geomspace(t0, 1e3 * math.exp(eta), 200)
    s = np.exp(log_survival(fam, t, eta, gam(fam, g)))
    assert np.all(np.diff(s) <= 1e-15)
    assert s[0] == pytest.approx(1.0, abs=1e-8)
    assert np.all((s >= 0) & (s <= 1))


@settings(max_examples=60, deadline=None)
@given(fam=fams, g=gammas, eta=st.floats(-2.0, 3.0), p=st.floats(0.02, 0.98))
def test_hazard_is_derivative_of_cumulative_hazard(fam, g, eta, p):
    t = quantile(fam, p, eta, gam(fam, g))
    h = 1e-5 * t
    num = -(log_survival(fam, t + h, eta, gam(fam, g)) - log_survival(fam, t - h, eta, gam(fam, g))) / (2 * h)
    haz = math.exp(log_hazard(fam, t, eta, gam(fam, g)))
    assert haz >= 0
    assert num == pytest.approx(haz, rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(fam=fams, g=gammas, eta=etas, p=st.floats(1e-6, 1 - 1e-6))
def test_quantile_inverts_cdf(fam, g, eta, p):
    t = quantile(fam, p, eta, gam(fam, g))
    cdf = -math.expm1(log_survival(fam, t, eta, gam(fam, g)))
    assert cdf == pytest.approx(p, rel=1e-8, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(1e-3, 1e3), eta=st.floats(-2.0, 2.0), p=st.floats(0.01, 0.99))
def test_weibull_shape_one_is_exponential(t, eta, p):
    W, E = FamilyKind.WEIBULL, FamilyKind.EXPONENTIAL
    assert log_survival(W, t, eta, 1.0) == pytest.approx(log_survival(E, t, eta), rel=1e-12, abs=1e-14)
    assert log_hazard(W, t, eta, 1.0) == pytest.approx(log_hazard(E, t, eta), rel=1e-12, abs=1e-12)
    assert quantile(W, p, eta, 1.0) == pytest.approx(quantile(E, p, eta), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(fam=fams, g=gammas, seed=st.integers(0, 2**32), n1=st.integers(1, 15), n2=st.integers(1, 15))
def test_loglik_additive_under_concatenation(fam, g, seed, n1, n2):
    rng = np.random.default_rng(seed)

    def make(n):
        return SurvivalDataset(rng.uniform(1, 3000, n), rng.random(n) < 0.6, rng.integers(0, 2, n))

    a, b = make(n1), make(n2)
    pv = ParamVector(0.3, 7.0, gam(fam, g))
    total = log_likelihood(a.concat(b), fam, pv)
    assert total == pytest.approx(log_likelihood(a, fam, pv) + log_likelihood(b, fam, pv), rel=1e-12)


def test_loglik_matches_recordwise_sum(backend, rng):
    n = 40
    d = SurvivalDataset(rng.uniform(1, 3000, n), rng.random(n) < 0.5, rng.integers(0, 2, n))
    for fam in FamilyKind:
        pv = ParamVector(0.2, 7.3, gam(fam, 1.4))
        eta = pv.alpha + pv.beta * d.treatment
        manual = np.sum(np.where(d.event, log_hazard(fam, d.time, eta, pv.gamma), 0.0)
                        + log_survival(fam, d.time, eta, pv.gamma))
        assert log_likelihood(d, fam, pv) == pytest.approx(manual, rel=1e-11)


def test_backends_agree_on_loglik(rng):
    from bmasurv import _backend

    if len(_backend.available()) < 2:
        pytest.skip("compiled kernels not built")
    n = 500
    t = rng.uniform(1, 5000, n)
    ev = (rng.random(n) < 0.5).astype(float)
    x = rng.integers(0, 2, n).astype(float)
    w = np.ones(n)
    for fam in FamilyKind:
        vals = [_backend.get(b).loglik(int(fam), t, ev, x, w, 7.5, 0.4, 0.9) for b in ("compiled", "python")]
        assert vals[0] == pytest.approx(vals[1], rel=1e-11)


# ---------------------------------------------------------------- sampling


def test_sample_time_is_inverse_cdf():
    u = np.random.default_rng(5).random()
    t = sample_time(FamilyKind.EXPONENTIAL, 0.0, None, np.random.default_rng(5))
    assert t == pytest.approx(-math.log1p(-u), rel=1e-14)


def test_sample_time_moments():
    rng = np.random.default_rng(99)
    x = sample_time(FamilyKind.EXPONENTIAL, 0.0, None, rng, size=100_000)
    assert abs(x.mean() - 1.0) < 0.01
    y = sample_time(FamilyKind.WEIBULL, 0.0, 2.0, rng, size=100_000)
    assert abs(np.mean(y > 1.0) - math.exp(-1)) < 0.005


def test_sample_time_array_eta_draws_per_element():
    t = sample_time(FamilyKind.WEIBULL, np.zeros(50), 1.0, np.random.default_rng(0))
    assert t.shape == (50,) and np.unique(t).size == 50


def test_sample_time_gamma_distribution():
    y = sample_time(FamilyKind.GAMMA, 1.0, 2.5, np.random.default_rng(3), size=20_000)
    assert stats.kstest(y, stats.gamma(2.5, scale=math.e).cdf).statistic < 0.015


# ---------------------------------------------------------------- dataset


def test_compressed_counts():
    d = SurvivalDataset([5.0, 5.0, 5.0, 2.0], [0, 0, 1, 1], [1, 1, 1, 0])
    lt, ev, x, w = d.compressed()
    assert w.sum() == 4 and len(w) == 3
    for fam in FamilyKind:
        pv = ParamVector(0.1, 1.0, gam(fam, 1.3))
        assert log_likelihood(d, fam, pv) == pytest.approx(
            sum(log_likelihood(SurvivalDataset([t], [e], [g]), fam, pv)
                for t, e, g in zip(d.time, d.event, d.treatment)), rel=1e-13)


def test_dataset_is_read_only():
    d = SurvivalDataset([1.0], [1], [0])
    with pytest.raises(ValueError):
        d.time[0] = 3.0
    assert d == SurvivalDataset([1.0], [True], [0])
    assert len(SurvivalDataset.empty()) == 0
