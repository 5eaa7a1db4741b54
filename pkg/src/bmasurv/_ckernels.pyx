# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: special functions, censored AFT log-likelihoods and the
componentwise adaptive Metropolis loop.

Mirrors ``bmasurv._pykernels`` function for function. Random numbers are
always generated by the caller, so both backends consume identical streams.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport (log, exp, log1p, expm1, erfc, lgamma, sqrt, fabs, pow,
                        isfinite, INFINITY, NAN)

cnp.import_array()

cdef double LOG_SQRT_2PI = 0.91893853320467274178
cdef double LOG_PI = 1.14472988584940017414
cdef double LOG_2 = 0.69314718055994530942
cdef double SQRT1_2 = 0.70710678118654752440
cdef double EPS = 2.220446049250313e-16
cdef double FPMIN = 1e-300


# ---------------------------------------------------------------- special

cdef inline double _log1mexp(double l) noexcept nogil:
    if l > -LOG_2:
        return log(-expm1(l))
    return log1p(-exp(l))


cdef inline double _log1pexp(double v) noexcept nogil:
    if v > 0.0:
        return v + log1p(exp(-v))
    return log1p(exp(v))


cdef double _log_norm_sf(double w) noexcept nogil:
    cdef double r
    cdef int k
    if w < 25.0:
        return log(0.5 * erfc(w * SQRT1_2))
    # Laplace continued fraction for the Mills ratio
    r = w
    for k in range(80, 0, -1):
        r = w + k / r
    return -0.5 * w * w - LOG_SQRT_2PI - log(r)


cdef double _log_gamma_p_series(double a, double x) noexcept nogil:
    cdef double ap = a
    cdef double d = 1.0 / a
    cdef double s = d
    cdef int n
    for n in range(100000):
        ap += 1.0
        d *= x / ap
        s += d
        if fabs(d) < fabs(s) * EPS:
            break
    return log(s) - x + a * log(x) - lgamma(a)


cdef double _log_gamma_q_cf(double a, double x) noexcept nogil:
    cdef double b = x + 1.0 - a
    cdef double c = 1.0 / FPMIN
    cdef double d = 1.0 / b
    cdef double h = d
    cdef double an, dl
    cdef int i
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if fabs(d) < FPMIN:
            d = FPMIN
        c = b + an / c
        if fabs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        dl = d * c
        h *= dl
        if fabs(dl - 1.0) < EPS:
            break
    return log(h) - x + a * log(x) - lgamma(a)


cdef double _log_gamma_q(double a, double x) noexcept nogil:
    if x <= 0.0:
        return 0.0
    if not isfinite(x):
        return -INFINITY
    if x < a + 1.0:
        return _log1mexp(_log_gamma_p_series(a, x))
    return _log_gamma_q_cf(a, x)


def _broadcast(t, eta):
    shape = np.broadcast_shapes(np.shape(t), np.shape(eta))
    tb = np.empty(shape)
    eb = np.empty(shape)
    tb[...] = t
    eb[...] = eta
    return tb, eb


def _arr(a):
    # writable C-contiguous float64 copy only when needed (typed memoryviews reject read-only buffers)
    return np.require(np.ravel(a), np.float64, ['C', 'W'])


def log_gamma_q(double a, x):
    """log of the regularized upper incomplete gamma Q(a, x), elementwise in x."""
    cdef double[::1] xv = _arr(x)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _log_gamma_q(a, xv[i])
    return out.reshape(np.shape(x))


def log_norm_sf(x):
    """log P(Z > x) for standard normal Z, elementwise."""
    cdef double[::1] xv = _arr(x)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _log_norm_sf(xv[i])
    return out.reshape(np.shape(x))


# ---------------------------------------------------------------- families

cdef inline double _log_surv(int fam, double logz, double g) noexcept nogil:
    if fam == 0:
        return -exp(logz)
    elif fam == 1:
        return -exp(g * logz)
    elif fam == 2:
        return _log_norm_sf(logz / g)
    elif fam == 3:
        return -_log1pexp(g * logz)
    return _log_gamma_q(g, exp(logz))


cdef inline double _log_dens(int fam, double logt, double logz, double eta, double g,
                             double logg, double lgam) noexcept nogil:
    cdef double w
    if fam == 0:
        return -eta - exp(logz)
    elif fam == 1:
        return logg - eta + (g - 1.0) * logz - exp(g * logz)
    elif fam == 2:
        w = logz / g
        return -0.5 * w * w - LOG_SQRT_2PI - logg - logt
    elif fam == 3:
        return logg - eta + (g - 1.0) * logz - 2.0 * _log1pexp(g * logz)
    return (g - 1.0) * logz - exp(logz) - lgam - eta


cdef double _survival_loglik(int fam, double[::1] lt, double[::1] ev, double[::1] x,
                             double[::1] w, double alpha, double beta, double g) noexcept nogil:
    cdef Py_ssize_t i, n = lt.shape[0]
    cdef double total = 0.0
    cdef double logt, eta, logz, term
    cdef double logg = log(g) if g > 0.0 else NAN
    cdef double lgam = lgamma(g) if fam == 4 else 0.0
    if fam != 0 and not (g > 0.0 and isfinite(g)):
        return -INFINITY
    for i in range(n):
        eta = alpha + beta * x[i]
        logt = lt[i]
        logz = logt - eta
        if ev[i] != 0.0:
            term = _log_dens(fam, logt, logz, eta, g, logg, lgam)
        else:
            term = _log_surv(fam, logz, g)
        total += w[i] * term
    return total


cdef double _meta_loglik(double[::1] est, double[::1] se2, double mu, double tau) noexcept nogil:
    cdef Py_ssize_t k, n = est.shape[0]
    cdef double v, r, total = 0.0
    if tau < 0.0:
        return -INFINITY
    for k in range(n):
        v = se2[k] + tau * tau
        r = est[k] - mu
        total += -0.5 * log(v) - LOG_SQRT_2PI - 0.5 * r * r / v
    return total


def log_survival(int fam, t, eta, double g):
    """log S(t | eta, g), elementwise over broadcast ``t`` and ``eta``."""
    tb, eb = _broadcast(t, eta)
    shape = tb.shape
    cdef double[::1] tv = _arr(tb)
    cdef double[::1] evv = _arr(eb)
    cdef Py_ssize_t i, n = tv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            ov[i] = _log_surv(fam, log(tv[i]) - evv[i], g)
    return out.reshape(shape)


def log_density(int fam, t, eta, double g):
    """log f(t | eta, g), elementwise."""
    tb, eb = _broadcast(t, eta)
    shape = tb.shape
    cdef double[::1] tv = _arr(tb)
    cdef double[::1] evv = _arr(eb)
    cdef Py_ssize_t i, n = tv.shape[0]
    cdef double logg = log(g) if g > 0.0 else NAN
    cdef double lgam = lgamma(g) if fam == 4 else 0.0
    cdef double logt
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            logt = log(tv[i])
            ov[i] = _log_dens(fam, logt, logt - evv[i], evv[i], g, logg, lgam)
    return out.reshape(shape)


def log_hazard(int fam, t, eta, double g):
    """log h(t | eta, g) = log f - log S, elementwise."""
    return log_density(fam, t, eta, g) - log_survival(fam, t, eta, g)


def loglik(int fam, t, event, x, w, double alpha, double beta, double g):
    """Weighted censored log-likelihood: sum_i w_i [event_i log f + (1-event_i) log S]."""
    cdef double[::1] tv = np.log(_arr(t))
    cdef double[::1] ev = _arr(event)
    cdef double[::1] xv = _arr(x)
    cdef double[::1] wv = _arr(w)
    cdef double res
    with nogil:
        res = _survival_loglik(fam, tv, ev, xv, wv, alpha, beta, g)
    return res


# ---------------------------------------------------------------- target

cdef class CTarget:
    """Kernel-side copy of a ``TargetSpec``."""

    cdef public int kind
    cdef public int dim
    cdef int nfull
    cdef double[::1] d0, d1, d2, d3
    cdef double[::1] fixed
    cdef long[::1] free_idx
    cdef long[::1] prior_kind
    cdef double[:, ::1] prior_par
    cdef long[::1] trans_kind
    cdef double[:, ::1] trans_par
    cdef double[::1] full

    def __init__(self, spec):
        self.kind = spec.kind
        self.d0 = _arr(spec.data[0])
        self.d1 = _arr(spec.data[1])
        self.d2 = _arr(spec.data[2])
        self.d3 = _arr(spec.data[3])
        self.fixed = _arr(spec.fixed).copy()
        self.full = _arr(spec.fixed).copy()
        self.nfull = self.fixed.shape[0]
        self.free_idx = np.ascontiguousarray(spec.free_idx, dtype=np.int64)
        self.dim = self.free_idx.shape[0]
        self.prior_kind = np.ascontiguousarray(spec.prior_kind, dtype=np.int64)
        self.prior_par = np.ascontiguousarray(spec.prior_par, dtype=np.float64)
        self.trans_kind = np.ascontiguousarray(spec.trans_kind, dtype=np.int64)
        self.trans_par = np.ascontiguousarray(spec.trans_par, dtype=np.float64)

    cdef double _log_prior(self, int p, double v) noexcept nogil:
        cdef int k = self.prior_kind[p]
        cdef double a = self.prior_par[p, 0]
        cdef double b = self.prior_par[p, 1]
        cdef double c = self.prior_par[p, 4]
        cdef double z
        if k == 0:
            z = (v - a) / b
            return c - 0.5 * z * z
        elif k == 1:
            if v < self.prior_par[p, 2] or v > self.prior_par[p, 3]:
                return -INFINITY
            z = (v - a) / b
            return c - 0.5 * z * z
        elif k == 2:
            if v <= 0.0:
                return -INFINITY
            z = (log(v) - a) / b
            return c - log(v) - 0.5 * z * z
        elif k == 3:
            z = (v - a) / b
            return c - log1p(z * z)
        else:
            if v < 0.0:
                return -INFINITY
            z = v / a
            return c - log1p(z * z)

    cdef double logp(self, double* u) noexcept nogil:
        cdef int j, p, tk
        cdef double lp = 0.0
        cdef double v, lo, hi, s
        for j in range(self.nfull):
            self.full[j] = self.fixed[j]
        for j in range(self.dim):
            p = self.free_idx[j]
            tk = self.trans_kind[p]
            lo = self.trans_par[p, 0]
            hi = self.trans_par[p, 1]
            if tk == 0:
                v = u[j]
            elif tk == 1:
                v = lo + exp(u[j])
                lp += u[j]
            elif tk == 2:
                v = hi - exp(u[j])
                lp += u[j]
            else:
                # interval: lo + (hi - lo) * sigmoid(u)
                if u[j] >= 0.0:
                    s = 1.0 / (1.0 + exp(-u[j]))
                else:
                    s = exp(u[j]) / (1.0 + exp(u[j]))
                v = lo + (hi - lo) * s
                lp += log(hi - lo) - _log1pexp(-u[j]) - _log1pexp(u[j])
            self.full[p] = v
            lp += self._log_prior(p, v)
        if not (lp > -INFINITY):
            return -INFINITY
        if self.kind == 5:
            lp += _meta_loglik(self.d0, self.d1, self.full[0], self.full[1])
        else:
            lp += _survival_loglik(self.kind, self.d0, self.d1, self.d2, self.d3,
                                   self.full[1], self.full[0], self.full[2])
        if lp != lp:
            return -INFINITY
        return lp


def make_target(spec):
    return CTarget(spec)


def log_target_many(CTarget target, points):
    """Unnormalized log posterior (unconstrained scale, Jacobian included) per row."""
    cdef double[:, ::1] pv = np.require(np.reshape(points, (-1, target.dim)) if target.dim else np.empty((np.shape(points)[0], 0)),
                                           np.float64, ['C', 'W'])
    cdef Py_ssize_t i, m = pv.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    if target.dim == 0:
        for i in range(m):
            ov[i] = target.logp(NULL)
        return out
    with nogil:
        for i in range(m):
            ov[i] = target.logp(&pv[i, 0])
    return out


def run_chain(CTarget target, init, normals, uniforms, int n_burnin,
              double target_accept, log_scale0):
    """Componentwise random-walk Metropolis with Robbins-Monro scale adaptation.

    Returns (kept unconstrained draws, kept log posterior values,
    post-burn-in acceptance rates, final log proposal scales).
    """
    cdef int d = target.dim
    cdef double[:, ::1] nz = np.ascontiguousarray(normals, dtype=np.float64)
    cdef double[:, ::1] uz = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef int n_iter = nz.shape[0]
    cdef int n_keep = n_iter - n_burnin
    theta_a = np.ascontiguousarray(init, dtype=np.float64).copy()
    prop_a = theta_a.copy()
    scale_a = np.ascontiguousarray(log_scale0, dtype=np.float64).copy()
    draws = np.empty((n_keep, d), dtype=np.float64)
    lps = np.empty(n_keep, dtype=np.float64)
    acc = np.zeros(d, dtype=np.float64)
    cdef double[::1] theta = theta_a
    cdef double[::1] prop = prop_a
    cdef double[::1] ls = scale_a
    cdef double[:, ::1] dv = draws
    cdef double[::1] lv = lps
    cdef double[::1] av = acc
    cdef int it, j, k
    cdef double lp, lp_new, gain
    cdef bint ok
    with nogil:
        lp = target.logp(&theta[0]) if d > 0 else target.logp(NULL)
        for it in range(n_iter):
            if it < n_burnin:
                gain = pow(it + 1.0, -0.6)
            for j in range(d):
                prop[j] = theta[j] + exp(ls[j]) * nz[it, j]
                lp_new = target.logp(&prop[0])
                ok = log(uz[it, j]) < lp_new - lp
                if ok:
                    theta[j] = prop[j]
                    lp = lp_new
                else:
                    prop[j] = theta[j]
                if it < n_burnin:
                    ls[j] += gain * ((1.0 if ok else 0.0) - target_accept)
                elif ok:
                    av[j] += 1.0
            if it >= n_burnin:
                k = it - n_burnin
                for j in range(d):
                    dv[k, j] = theta[j]
                lv[k] = lp
    if n_keep > 0:
        acc /= n_keep
    return draws, lps, acc, scale_a
