"""Pure numpy/scipy kernels; the fallback when the compiled extension is absent.

Same surface as ``bmasurv._ckernels``. Bulk special-function evaluation uses
scipy.special; the log-space series/continued fraction in ``special`` takes
over where the regularized gamma tail underflows.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special as sc

from . import special
from ._codes import (
    EXPONENTIAL,
    LOGLOGISTIC,
    LOGNORMAL,
    META_NORMAL,
    PRIOR_CAUCHY,
    PRIOR_LOGNORMAL,
    PRIOR_NORMAL,
    PRIOR_TRUNCNORMAL,
    TRANS_IDENTITY,
    TRANS_LOWER,
    TRANS_UPPER,
    WEIBULL,
    TargetSpec,
)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_Q_UNDERFLOW = 1e-280


def log_norm_sf(x):
    return sc.log_ndtr(-np.asarray(x, dtype=np.float64))


def log_gamma_q(a: float, x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = np.array(np.log(sc.gammaincc(a, x)), dtype=np.float64)
    tail = (out < math.log(_Q_UNDERFLOW)) & np.isfinite(x)
    if np.any(tail):
        flat = out.reshape(-1)
        for i in np.flatnonzero(tail.reshape(-1)):
            flat[i] = special.log_gamma_q(a, float(x.reshape(-1)[i]))
    return out


def _log1pexp(v):
    return np.logaddexp(0.0, v)


def _log_surv_z(fam: int, logz, g: float):
    if fam == EXPONENTIAL:
        return -np.exp(logz)
    if fam == WEIBULL:
        return -np.exp(g * logz)
    if fam == LOGNORMAL:
        return sc.log_ndtr(-logz / g)
    if fam == LOGLOGISTIC:
        return -_log1pexp(g * logz)
    return log_gamma_q(g, np.exp(logz))


def _log_dens_z(fam: int, logt, logz, eta, g: float):
    if fam == EXPONENTIAL:
        return -eta - np.exp(logz)
    if fam == WEIBULL:
        return math.log(g) - eta + (g - 1.0) * logz - np.exp(g * logz)
    if fam == LOGNORMAL:
        w = logz / g
        return -0.5 * w * w - _LOG_SQRT_2PI - math.log(g) - logt
    if fam == LOGLOGISTIC:
        return math.log(g) - eta + (g - 1.0) * logz - 2.0 * _log1pexp(g * logz)
    return (g - 1.0) * logz - np.exp(logz) - math.lgamma(g) - eta


def log_survival(fam: int, t, eta, g: float):
    t, eta = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(eta, dtype=np.float64))
    with np.errstate(over="ignore"):
        return np.asarray(_log_surv_z(fam, np.log(t) - eta, g), dtype=np.float64)


def log_density(fam: int, t, eta, g: float):
    t, eta = np.broadcast_arrays(np.asarray(t, dtype=np.float64), np.asarray(eta, dtype=np.float64))
    logt = np.log(t)
    with np.errstate(over="ignore"):
        return np.asarray(_log_dens_z(fam, logt, logt - eta, eta, g), dtype=np.float64)


def log_hazard(fam: int, t, eta, g: float):
    return log_density(fam, t, eta, g) - log_survival(fam, t, eta, g)


def loglik(fam: int, t, event, x, w, alpha: float, beta: float, g: float) -> float:
    return _loglik_logt(fam, np.log(np.asarray(t, dtype=np.float64)), event, x, w, alpha, beta, g)


def _loglik_logt(fam: int, logt, event, x, w, alpha: float, beta: float, g: float) -> float:
    if fam != EXPONENTIAL and not (g > 0.0 and math.isfinite(g)):
        return -math.inf
    event = np.asarray(event, dtype=np.float64)
    eta = alpha + beta * np.asarray(x, dtype=np.float64)
    logz = logt - eta
    ev = event != 0.0
    terms = np.empty_like(logt)
    with np.errstate(over="ignore"):
        terms[ev] = _log_dens_z(fam, logt[ev], logz[ev], eta[ev], g)
        terms[~ev] = _log_surv_z(fam, logz[~ev], g)
    return float(np.dot(np.asarray(w, dtype=np.float64), terms))


def _meta_loglik(est, se2, mu: float, tau: float) -> float:
    if tau < 0.0:
        return -math.inf
    v = se2 + tau * tau
    r = est - mu
    return float(np.sum(-0.5 * np.log(v) - _LOG_SQRT_2PI - 0.5 * r * r / v))


class PyTarget:
    def __init__(self, spec: TargetSpec):
        self.spec = spec
        self.kind = spec.kind
        self.dim = spec.dim
        self.data = tuple(np.ascontiguousarray(a, dtype=np.float64) for a in spec.data)
        self.free = [int(p) for p in spec.free_idx]

    def _log_prior(self, p: int, v: float) -> float:
        k = int(self.spec.prior_kind[p])
        a, b, lo, hi, c = (float(q) for q in self.spec.prior_par[p])
        if k == PRIOR_NORMAL:
            z = (v - a) / b
            return c - 0.5 * z * z
        if k == PRIOR_TRUNCNORMAL:
            if v < lo or v > hi:
                return -math.inf
            z = (v - a) / b
            return c - 0.5 * z * z
        if k == PRIOR_LOGNORMAL:
            if v <= 0.0:
                return -math.inf
            z = (math.log(v) - a) / b
            return c - math.log(v) - 0.5 * z * z
        if k == PRIOR_CAUCHY:
            z = (v - a) / b
            return c - math.log1p(z * z)
        if v < 0.0:
            return -math.inf
        z = v / a
        return c - math.log1p(z * z)

    def logp(self, u) -> float:
        full = self.spec.fixed.copy()
        lp = 0.0
        for j, p in enumerate(self.free):
            tk = int(self.spec.trans_kind[p])
            lo, hi = float(self.spec.trans_par[p, 0]), float(self.spec.trans_par[p, 1])
            uj = float(u[j])
            if tk == TRANS_IDENTITY:
                v = uj
            elif tk == TRANS_LOWER:
                v = lo + math.exp(uj)
                lp += uj
            elif tk == TRANS_UPPER:
                v = hi - math.exp(uj)
                lp += uj
            else:
                v = lo + (hi - lo) * sc.expit(uj)
                lp += math.log(hi - lo) - float(np.logaddexp(0.0, -uj)) - float(np.logaddexp(0.0, uj))
            full[p] = v
            lp += self._log_prior(p, v)
        if not lp > -math.inf:
            return -math.inf
        if self.kind == META_NORMAL:
            lp += _meta_loglik(self.data[0], self.data[1], full[0], full[1])
        else:
            lt, ev, x, w = self.data
            lp += _loglik_logt(self.kind, lt, ev, x, w, full[1], full[0], full[2])
        if math.isnan(lp):
            return -math.inf
        return lp


def make_target(spec: TargetSpec) -> PyTarget:
    return PyTarget(spec)


def log_target_many(target: PyTarget, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, target.dim)
    return np.array([target.logp(row) for row in pts], dtype=np.float64)


def run_chain(target: PyTarget, init, normals, uniforms, n_burnin: int,
              target_accept: float, log_scale0):
    normals = np.asarray(normals, dtype=np.float64)
    uniforms = np.asarray(uniforms, dtype=np.float64)
    d = target.dim
    n_iter = normals.shape[0]
    n_keep = n_iter - n_burnin
    theta = np.array(init, dtype=np.float64)
    ls = np.array(log_scale0, dtype=np.float64)
    draws = np.empty((n_keep, d))
    lps = np.empty(n_keep)
    acc = np.zeros(d)
    lp = target.logp(theta)
    for it in range(n_iter):
        burn = it < n_burnin
        gain = (it + 1.0) ** -0.6
        for j in range(d):
            prop = theta.copy()
            prop[j] = theta[j] + math.exp(ls[j]) * normals[it, j]
            lp_new = target.logp(prop)
            ok = math.log(uniforms[it, j]) < lp_new - lp
            if ok:
                theta = prop
                lp = lp_new
            if burn:
                ls[j] += gain * ((1.0 if ok else 0.0) - target_accept)
            elif ok:
                acc[j] += 1.0
        if not burn:
            draws[it - n_burnin] = theta
            lps[it - n_burnin] = lp
    if n_keep > 0:
        acc /= n_keep
    return draws, lps, acc, ls
