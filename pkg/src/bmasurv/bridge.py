"""Marginal likelihood by bridge sampling (Meng-Wong optimal bridge).

The posterior draws of each chain are split in half. The first halves fit a
multivariate normal proposal in the sampler's unconstrained space; the second
halves and an equal number of proposal draws enter the fixed-point iteration.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import _backend
from .families import SurvivalDataset
from .priors import ModelSpec
from .sampler import PosteriorFit, survival_target
from .seeding import rng_for

MAX_ITER = 1000
TOL = 1e-10
MIN_DRAWS_PER_DIM = 1000


class BridgeSamplingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BridgeResult:
    log_marglik: float
    iterations_used: int
    relative_change_at_stop: float
    proposal_moments: tuple[np.ndarray, np.ndarray] | None


def _mvn_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    d = mean.shape[0]
    z = linalg.solve_triangular(chol, (x - mean).T, lower=True)
    return -0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(chol))) - 0.5 * d * math.log(2 * math.pi)


def _iterate(l1: np.ndarray, l2: np.ndarray, max_iter: int, tol: float) -> tuple[float, int, float]:
    n1, n2 = l1.shape[0], l2.shape[0]
    lstar = float(np.median(l1[np.isfinite(l1)]))
    l1 = l1 - lstar
    l2 = l2 - lstar
    log_s1 = math.log(n1 / (n1 + n2))
    log_s2 = math.log(n2 / (n1 + n2))
    # importance-sampling estimate with the proposal as the start
    log_r = float(logsumexp(l2) - math.log(n2))
    change = math.inf
    for it in range(1, max_iter + 1):
        num = logsumexp(l2 - np.logaddexp(log_s1 + l2, log_s2 + log_r)) - math.log(n2)
        den = logsumexp(-np.logaddexp(log_s1 + l1, log_s2 + log_r)) - math.log(n1)
        new = float(num - den)
        if not math.isfinite(new):
            raise BridgeSamplingError(f"non-finite bridge iterate at step {it}")
        change = abs(math.expm1(log_r - new))
        log_r = new
        if change < tol:
            return log_r + lstar, it, change
    raise BridgeSamplingError(
        f"bridge iteration did not converge in {max_iter} steps (relative change {change:.3e}, "
        f"log r {log_r + lstar:.6f})"
    )


def bridge_marglik(
    fit: PosteriorFit,
    model: ModelSpec | None = None,
    data: SurvivalDataset | None = None,
    seed: int = 0,
    max_iter: int = MAX_ITER,
    tol: float = TOL,
) -> BridgeResult:
    """log p(data | model) from the fit's draws.

    With ``model`` and ``data`` omitted the fit's own target (and its stored
    log posterior values) are reused.
    """
    kern = _backend.kernels
    if model is not None and data is not None:
        target = survival_target(model, data)
        recompute = True
    else:
        target = fit.target
        recompute = False
    ktarget = kern.make_target(target)
    d = target.dim
    if d == 0:
        lml = float(kern.log_target_many(ktarget, np.empty((1, 0)))[0])
        return BridgeResult(lml, 0, 0.0, None)
    if fit.n_draws < MIN_DRAWS_PER_DIM * d:
        raise ValueError(
            f"bridge sampling needs at least {MIN_DRAWS_PER_DIM} draws per free dimension "
            f"({fit.n_draws} for {d})"
        )

    per_chain = fit.chain_view(fit.draws_unconstrained)
    lp_chain = fit.log_posterior_values.reshape(fit.chains, -1)
    half = per_chain.shape[1] // 2
    fit_part = per_chain[:, :half].reshape(-1, d)
    iter_part = per_chain[:, half:].reshape(-1, d)

    mean = fit_part.mean(axis=0)
    cov = np.atleast_2d(np.cov(fit_part, rowvar=False))
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise BridgeSamplingError("proposal covariance is singular; draw more posterior samples") from exc
    if not np.all(np.diag(chol) > 0):
        raise BridgeSamplingError("proposal covariance is singular; draw more posterior samples")

    n2 = iter_part.shape[0]
    rng = rng_for(seed, 0)
    gen = mean + rng.standard_normal((n2, d)) @ chol.T

    if recompute:
        q11 = kern.log_target_many(ktarget, iter_part)
    else:
        q11 = lp_chain[:, half:].reshape(-1)
    q12 = _mvn_logpdf(iter_part, mean, chol)
    q21 = kern.log_target_many(ktarget, gen)
    q22 = _mvn_logpdf(gen, mean, chol)

    lml, iters, change = _iterate(q11 - q12, q21 - q22, max_iter, tol)
    return BridgeResult(lml, iters, change, (mean, cov))


def with_marglik(fit: PosteriorFit, result: BridgeResult) -> PosteriorFit:
    return dataclasses.replace(fit, log_marglik=result.log_marglik)
