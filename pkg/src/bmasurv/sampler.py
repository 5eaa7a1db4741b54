"""Posterior sampling by componentwise adaptive random-walk Metropolis.

Parameters are moved to an unconstrained scale (log for positive supports,
log-shift for one-sided truncation, logit for two-sided truncation) and the
log-Jacobian is added to the target. Proposal scales follow a Robbins-Monro
recursion during burn-in and are frozen afterwards.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend, _codes
from .families import FamilyKind, SurvivalDataset
from .priors import ModelSpec, PriorSpec, from_unconstrained, initial_value, is_spike, to_unconstrained, transform_of
from .seeding import rng_for

log = logging.getLogger(__name__)

RHAT_WARN = 1.05
_INIT_LOG_SCALE = math.log(0.5)
_MAX_INIT_TRIES = 100


class ConvergenceWarning(UserWarning):
    pass


class InitializationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerSettings:
    chains: int = 2
    burnin_iterations: int = 1000
    sampling_iterations: int = 5000
    adapt_target_acceptance: float = 0.44
    seed: int = 0

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("at least two chains are needed for R-hat")
        if self.burnin_iterations <= 0 or self.sampling_iterations <= 0:
            raise ValueError("iteration counts must be positive")
        if not 0.0 < self.adapt_target_acceptance < 1.0:
            raise ValueError("target acceptance must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")

    def with_seed(self, seed: int) -> "SamplerSettings":
        return SamplerSettings(self.chains, self.burnin_iterations, self.sampling_iterations,
                               self.adapt_target_acceptance, int(seed))


@dataclass(frozen=True, eq=False)
class PosteriorFit:
    """Posterior draws for one model (constrained scale, chains stacked)."""

    draws: np.ndarray
    free_parameter_names: tuple[str, ...]
    rhat: dict[str, float]
    ess: dict[str, float]
    log_posterior_values: np.ndarray
    model: object
    target: _codes.TargetSpec
    draws_unconstrained: np.ndarray
    chains: int
    fixed_values: dict[str, float]
    acceptance: dict[str, float] = field(default_factory=dict)
    log_marglik: float | None = None
    warnings: tuple[str, ...] = ()

    @property
    def n_draws(self) -> int:
        return int(self.draws.shape[0])

    def parameter(self, name: str) -> np.ndarray:
        """Draws of ``name``; fixed (spike) parameters come back as constants."""
        if name in self.free_parameter_names:
            return self.draws[:, self.free_parameter_names.index(name)]
        if name in self.fixed_values:
            return np.full(self.n_draws, self.fixed_values[name])
        raise KeyError(name)

    def chain_view(self, draws: np.ndarray | None = None) -> np.ndarray:
        d = self.draws if draws is None else draws
        return d.reshape(self.chains, -1, d.shape[1])

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for j, name in enumerate(self.free_parameter_names):
            x = self.draws[:, j]
            out[name] = {
                "mean": float(np.mean(x)),
                "sd": float(np.std(x, ddof=1)),
                "q025": float(np.quantile(x, 0.025)),
                "median": float(np.median(x)),
                "q975": float(np.quantile(x, 0.975)),
                "rhat": self.rhat[name],
                "ess": self.ess[name],
            }
        return out


# ---------------------------------------------------------------- targets


def _param_arrays(params: list[tuple[str, PriorSpec]], defaults: list[float]):
    n = len(params)
    fixed = np.array(defaults, dtype=np.float64)
    prior_kind = np.zeros(n, dtype=np.int64)
    prior_par = np.zeros((n, 5))
    trans_kind = np.zeros(n, dtype=np.int64)
    trans_par = np.zeros((n, 2))
    free = []
    for p, (_, prior) in enumerate(params):
        if prior is None:
            continue
        if is_spike(prior):
            fixed[p] = prior.value
            continue
        free.append(p)
        code, par = prior._kernel()
        prior_kind[p] = code
        prior_par[p] = par
        tk, lo, hi = transform_of(prior)
        trans_kind[p] = tk
        trans_par[p] = (lo, hi)
    return fixed, np.array(free, dtype=np.int64), prior_kind, prior_par, trans_kind, trans_par


def survival_target(model: ModelSpec, data: SurvivalDataset) -> _codes.TargetSpec:
    params = [("beta", model.prior_beta), ("alpha", model.prior_alpha), ("gamma", model.prior_gamma)]
    fixed, free, pk, pp, tk, tp = _param_arrays(params, [0.0, 0.0, 1.0])
    return _codes.TargetSpec(int(model.family), data.compressed(), fixed, free, pk, pp, tk, tp)


def meta_target(estimates: np.ndarray, ses: np.ndarray, prior_mu: PriorSpec, prior_tau: PriorSpec) -> _codes.TargetSpec:
    est = np.asarray(estimates, dtype=np.float64)
    se2 = np.asarray(ses, dtype=np.float64) ** 2
    z = np.zeros_like(est)
    fixed, free, pk, pp, tk, tp = _param_arrays([("mu", prior_mu), ("tau", prior_tau)], [0.0, 0.0])
    return _codes.TargetSpec(_codes.META_NORMAL, (est, se2, z, z), fixed, free, pk, pp, tk, tp)


# ---------------------------------------------------------------- diagnostics


def split_rhat(chains: np.ndarray) -> float:
    """Split-R-hat of one scalar; ``chains`` is (n_chains, n_draws)."""
    chains = np.asarray(chains, dtype=np.float64)
    n = chains.shape[1] // 2
    if n < 2:
        return math.nan
    halves = np.concatenate([chains[:, :n], chains[:, -n:]], axis=0)
    w = np.mean(np.var(halves, axis=1, ddof=1))
    b = n * np.var(np.mean(halves, axis=1), ddof=1)
    if w == 0.0:
        return 1.0 if b == 0.0 else math.inf
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n=m, axis=-1)
    return np.fft.irfft(f * np.conj(f), n=m, axis=-1)[..., :n] / n


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence estimator."""
    chains = np.asarray(chains, dtype=np.float64)
    m, n = chains.shape
    if n < 4:
        return float(m * n)
    acov = _autocov(chains)
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    var_plus = w * (n - 1) / n
    if m > 1:
        var_plus += np.var(chains.mean(axis=1), ddof=1)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    total = 0.0
    prev = math.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = max(-1.0 + 2.0 * total, 1.0 / math.log10(m * n + 10))
    return float(m * n / tau)


# ---------------------------------------------------------------- sampling


def _initial_point(target, params, rng, init=None) -> np.ndarray:
    kern = _backend.kernels
    free = [(name, prior) for name, prior in params if prior is not None and not is_spike(prior)]
    if init is not None:
        u = np.array([float(to_unconstrained(prior, init[name])) for name, prior in free])
        if math.isfinite(kern.log_target_many(target, u[None, :])[0]):
            return u
        log.debug("supplied initial values have non-finite target; drawing from priors")
    for _ in range(_MAX_INIT_TRIES):
        u = np.array([float(to_unconstrained(prior, initial_value(prior, rng))) for _, prior in free])
        if np.all(np.isfinite(u)) and math.isfinite(kern.log_target_many(target, u[None, :])[0]):
            return u
    raise InitializationError(f"no finite log posterior after {_MAX_INIT_TRIES} prior draws")


def sample_target(
    target: _codes.TargetSpec,
    params: list[tuple[str, PriorSpec | None]],
    settings: SamplerSettings,
    model=None,
    init: dict[str, float] | None = None,
) -> PosteriorFit:
    """Run ``settings.chains`` independent chains on a prepared target."""
    kern = _backend.kernels
    ktarget = kern.make_target(target)
    free = [(name, prior) for name, prior in params if prior is not None and not is_spike(prior)]
    names = tuple(name for name, _ in free)
    fixed_values = {name: float(prior.value) for name, prior in params if prior is not None and is_spike(prior)}
    d = len(free)
    n_iter = settings.burnin_iterations + settings.sampling_iterations
    n_keep = settings.sampling_iterations

    if d == 0:
        lp = float(kern.log_target_many(ktarget, np.empty((1, 0)))[0])
        total = settings.chains * n_keep
        return PosteriorFit(
            draws=np.empty((total, 0)),
            free_parameter_names=(),
            rhat={},
            ess={},
            log_posterior_values=np.full(total, lp),
            model=model,
            target=target,
            draws_unconstrained=np.empty((total, 0)),
            chains=settings.chains,
            fixed_values=fixed_values,
        )

    all_u, all_lp, acc_rates = [], [], []
    for c in range(settings.chains):
        u0 = _initial_point(ktarget, params, rng_for(settings.seed, c, 0), init)
        mrng = rng_for(settings.seed, c, 1)
        normals = mrng.standard_normal((n_iter, d))
        uniforms = 1.0 - mrng.random((n_iter, d))
        draws_u, lps, acc, _ = kern.run_chain(
            ktarget, u0, normals, uniforms, settings.burnin_iterations,
            settings.adapt_target_acceptance, np.full(d, _INIT_LOG_SCALE),
        )
        all_u.append(draws_u)
        all_lp.append(lps)
        acc_rates.append(acc)

    u = np.concatenate(all_u, axis=0)
    draws = np.column_stack([from_unconstrained(prior, u[:, j]) for j, (_, prior) in enumerate(free)])
    per_chain = draws.reshape(settings.chains, n_keep, d)
    rhat = {name: split_rhat(per_chain[:, :, j]) for j, name in enumerate(names)}
    ess = {name: effective_sample_size(per_chain[:, :, j]) for j, name in enumerate(names)}
    acceptance = {name: float(np.mean([a[j] for a in acc_rates])) for j, name in enumerate(names)}
    notes = []
    bad = {k: v for k, v in rhat.items() if not v <= RHAT_WARN}
    if bad:
        msg = "R-hat above %.2f for %s" % (RHAT_WARN, ", ".join(f"{k}={v:.3f}" for k, v in bad.items()))
        label = getattr(model, "name", "")
        warnings.warn(f"{label}: {msg}" if label else msg, ConvergenceWarning, stacklevel=2)
        notes.append(msg)
    return PosteriorFit(
        draws=draws,
        free_parameter_names=names,
        rhat=rhat,
        ess=ess,
        log_posterior_values=np.concatenate(all_lp),
        model=model,
        target=target,
        draws_unconstrained=u,
        chains=settings.chains,
        fixed_values=fixed_values,
        acceptance=acceptance,
        warnings=tuple(notes),
    )


def sample_posterior(
    model: ModelSpec,
    data: SurvivalDataset,
    settings: SamplerSettings = SamplerSettings(),
    init: dict[str, float] | None = None,
) -> PosteriorFit:
    """Sample p(beta, alpha, gamma | data, model). Empty data samples the prior."""
    target = survival_target(model, data)
    return sample_target(target, model.parameter_priors(), settings, model=model, init=init)


def family_of(fit: PosteriorFit) -> FamilyKind:
    return fit.model.family
