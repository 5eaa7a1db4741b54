"""Scalar special functions in pure Python.

The regularized incomplete gamma is split at ``x = a + 1``: the power series
for P below the split and a modified-Lentz continued fraction for Q above it,
both carried in log space so deep tails do not underflow.
"""
from __future__ import annotations

import math

_EPS = 2.220446049250313e-16
_FPMIN = 1e-300
_MAXIT = 100_000


def log1mexp(logp: float) -> float:
    """log(1 - exp(logp)) for logp <= 0."""
    if logp > -math.log(2.0):
        return math.log(-math.expm1(logp))
    return math.log1p(-math.exp(logp))


def _log_p_series(a: float, x: float) -> float:
    ap = a
    d = s = 1.0 / a
    for _ in range(_MAXIT):
        ap += 1.0
        d *= x / ap
        s += d
        if abs(d) < abs(s) * _EPS:
            break
    return math.log(s) - x + a * math.log(x) - math.lgamma(a)


def _log_q_cf(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.log(h) - x + a * math.log(x) - math.lgamma(a)


def log_gamma_p(a: float, x: float) -> float:
    """log of the regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return -math.inf
    if x < a + 1.0:
        return _log_p_series(a, x)
    return log1mexp(_log_q_cf(a, x))


def log_gamma_q(a: float, x: float) -> float:
    """log of the regularized upper incomplete gamma Q(a, x)."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    if x < a + 1.0:
        return log1mexp(_log_p_series(a, x))
    return _log_q_cf(a, x)


def gamma_q(a: float, x: float) -> float:
    return math.exp(log_gamma_q(a, x))


def log_norm_sf(w: float) -> float:
    """log P(Z > w) for a standard normal Z."""
    if w < 25.0:
        return math.log(0.5 * math.erfc(w / math.sqrt(2.0)))
    r = w
    for k in range(80, 0, -1):
        r = w + k / r
    return -0.5 * w * w - 0.5 * math.log(2.0 * math.pi) - math.log(r)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))
