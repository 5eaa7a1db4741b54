"""Prior distributions and model specifications.

A ``Spike`` fixes its parameter: it removes the parameter from the sampled
vector rather than acting as a density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import stats
from scipy import special as sc

from . import _codes
from .families import FamilyKind, SpecificationError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class PriorEvaluationError(TypeError):
    """Raised when a point-mass prior is asked for a density."""


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        _positive("sigma", self.sigma)

    support = (-math.inf, math.inf)

    def log_density(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI

    def sample(self, rng, size=None):
        return self.mu + self.sigma * rng.standard_normal(size)

    def mean(self) -> float:
        return float(self.mu)

    def sd(self) -> float:
        return float(self.sigma)

    def _kernel(self):
        return _codes.PRIOR_NORMAL, [self.mu, self.sigma, -math.inf, math.inf, -math.log(self.sigma) - _LOG_SQRT_2PI]


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mu, sigma) restricted to [lower, upper] and renormalized."""

    mu: float
    sigma: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        _positive("sigma", self.sigma)
        if not self.lower < self.upper:
            raise ValueError("truncation requires lower < upper")

    @property
    def support(self):
        return (float(self.lower), float(self.upper))

    @property
    def _ab(self):
        return (self.lower - self.mu) / self.sigma, (self.upper - self.mu) / self.sigma

    def log_mass(self) -> float:
        a, b = self._ab
        # difference of normal CDFs, evaluated on the side with the smaller tail
        if a > 0:
            la, lb = sc.log_ndtr(-a), sc.log_ndtr(-b)
        else:
            la, lb = sc.log_ndtr(b), sc.log_ndtr(a)
        if lb == -math.inf:
            return float(la)
        return float(la + math.log(-math.expm1(lb - la)))

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = (x - self.mu) / self.sigma
        out = -0.5 * z * z - math.log(self.sigma) - _LOG_SQRT_2PI - self.log_mass()
        return np.where((x >= self.lower) & (x <= self.upper), out, -np.inf)

    def _dist(self):
        a, b = self._ab
        return stats.truncnorm(a, b, loc=self.mu, scale=self.sigma)

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self._dist().ppf(u)

    def cdf(self, x):
        return self._dist().cdf(x)

    def mean(self) -> float:
        return float(self._dist().mean())

    def sd(self) -> float:
        return float(self._dist().std())

    def _kernel(self):
        const = -math.log(self.sigma) - _LOG_SQRT_2PI - self.log_mass()
        return _codes.PRIOR_TRUNCNORMAL, [self.mu, self.sigma, self.lower, self.upper, const]


@dataclass(frozen=True)
class LogNormal:
    """log X ~ Normal(mu_log, sigma_log)."""

    mu_log: float
    sigma_log: float

    def __post_init__(self):
        _positive("sigma_log", self.sigma_log)

    support = (0.0, math.inf)

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            lx = np.log(x)
            z = (lx - self.mu_log) / self.sigma_log
            out = -0.5 * z * z - lx - math.log(self.sigma_log) - _LOG_SQRT_2PI
        return np.where(x > 0, out, -np.inf)

    def sample(self, rng, size=None):
        return np.exp(self.mu_log + self.sigma_log * rng.standard_normal(size))

    def mean(self) -> float:
        return math.exp(self.mu_log + 0.5 * self.sigma_log**2)

    def sd(self) -> float:
        s2 = self.sigma_log**2
        return math.sqrt(math.expm1(s2)) * math.exp(self.mu_log + 0.5 * s2)

    def _kernel(self):
        return _codes.PRIOR_LOGNORMAL, [self.mu_log, self.sigma_log, 0.0, math.inf, -math.log(self.sigma_log) - _LOG_SQRT_2PI]


@dataclass(frozen=True)
class Cauchy:
    location: float
    scale: float

    def __post_init__(self):
        _positive("scale", self.scale)

    support = (-math.inf, math.inf)

    def log_density(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.location) / self.scale
        return -math.log(math.pi * self.scale) - np.log1p(z * z)

    def sample(self, rng, size=None):
        return self.location + self.scale * np.tan(math.pi * (rng.random(size) - 0.5))

    def clamp(self, x: float) -> float:
        lim = 5.0 * self.scale
        return float(np.clip(x, self.location - lim, self.location + lim))

    def _kernel(self):
        return _codes.PRIOR_CAUCHY, [self.location, self.scale, -math.inf, math.inf, -math.log(math.pi * self.scale)]


@dataclass(frozen=True)
class HalfCauchy:
    scale: float

    def __post_init__(self):
        _positive("scale", self.scale)

    support = (0.0, math.inf)

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = x / self.scale
        out = math.log(2.0) - math.log(math.pi * self.scale) - np.log1p(z * z)
        return np.where(x >= 0, out, -np.inf)

    def sample(self, rng, size=None):
        return self.scale * np.tan(0.5 * math.pi * rng.random(size))

    def clamp(self, x: float) -> float:
        return float(min(x, 5.0 * self.scale))

    def _kernel(self):
        const = math.log(2.0) - math.log(math.pi * self.scale)
        return _codes.PRIOR_HALFCAUCHY, [self.scale, 1.0, 0.0, math.inf, const]


@dataclass(frozen=True)
class Spike:
    value: float = 0.0

    support = None

    def log_density(self, x):
        raise PriorEvaluationError("a spike prior has no density; its parameter is fixed, not sampled")

    def sample(self, rng=None, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    def mean(self) -> float:
        return float(self.value)

    def sd(self) -> float:
        return 0.0


PriorSpec = Union[Normal, TruncatedNormal, LogNormal, Cauchy, HalfCauchy, Spike]


def log_prior_density(spec: PriorSpec, x):
    """Normalized log density; -inf outside the support. Spikes raise."""
    out = spec.log_density(x)
    return float(out) if np.ndim(out) == 0 else out


def sample_prior(spec: PriorSpec, rng: np.random.Generator, size=None):
    out = spec.sample(rng, size)
    return float(out) if np.ndim(out) == 0 else out


def is_spike(spec: PriorSpec) -> bool:
    return isinstance(spec, Spike)


# ---------------------------------------------------------------- transforms


def transform_of(spec: PriorSpec) -> tuple[int, float, float]:
    """Unconstraining map for a prior's support: (code, lower, upper)."""
    lo, hi = spec.support
    if math.isinf(lo) and math.isinf(hi):
        return _codes.TRANS_IDENTITY, lo, hi
    if math.isinf(hi):
        return _codes.TRANS_LOWER, lo, hi
    if math.isinf(lo):
        return _codes.TRANS_UPPER, lo, hi
    return _codes.TRANS_INTERVAL, lo, hi


def to_unconstrained(spec: PriorSpec, x):
    code, lo, hi = transform_of(spec)
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        if code == _codes.TRANS_IDENTITY:
            return x
        if code == _codes.TRANS_LOWER:
            return np.log(x - lo)
        if code == _codes.TRANS_UPPER:
            return np.log(hi - x)
        return sc.logit((x - lo) / (hi - lo))


def from_unconstrained(spec: PriorSpec, u):
    code, lo, hi = transform_of(spec)
    u = np.asarray(u, dtype=np.float64)
    if code == _codes.TRANS_IDENTITY:
        return u
    if code == _codes.TRANS_LOWER:
        return lo + np.exp(u)
    if code == _codes.TRANS_UPPER:
        return hi - np.exp(u)
    return lo + (hi - lo) * sc.expit(u)


def initial_value(spec: PriorSpec, rng: np.random.Generator) -> float:
    """Prior draw for chain initialization, clamped for heavy-tailed priors."""
    x = float(spec.sample(rng))
    if hasattr(spec, "clamp"):
        x = spec.clamp(x)
    lo, hi = spec.support
    if x <= lo or x >= hi:
        # boundary draws map to +-inf in unconstrained space
        x = float(np.clip(x, np.nextafter(lo, math.inf), np.nextafter(hi, -math.inf)))
    return x


# ---------------------------------------------------------------- model spec


@dataclass(frozen=True)
class ModelSpec:
    """One parametric family with priors on (beta, alpha, gamma) and a prior model weight."""

    family: FamilyKind
    prior_beta: PriorSpec
    prior_alpha: PriorSpec
    prior_gamma: PriorSpec | None = None
    prior_weight: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        fam = FamilyKind.parse(self.family)
        object.__setattr__(self, "family", fam)
        if fam.has_aux and self.prior_gamma is None:
            raise SpecificationError(f"{fam.label} needs a prior on gamma")
        if not fam.has_aux and self.prior_gamma is not None:
            raise SpecificationError("the exponential family has no auxiliary parameter")
        if self.prior_gamma is not None and not is_spike(self.prior_gamma):
            lo, _ = self.prior_gamma.support
            if lo < 0:
                raise SpecificationError("the prior on gamma must have positive support")
        if not (0.0 < self.prior_weight <= 1.0):
            raise ValueError("prior_weight must lie in (0, 1]")
        if not self.name:
            object.__setattr__(self, "name", f"{fam.label} ({'H1' if self.assumes_effect else 'H0'})")

    @property
    def assumes_effect(self) -> bool:
        return not (is_spike(self.prior_beta) and self.prior_beta.value == 0.0)

    def parameter_priors(self) -> list[tuple[str, PriorSpec]]:
        out = [("beta", self.prior_beta), ("alpha", self.prior_alpha)]
        if self.family.has_aux:
            out.append(("gamma", self.prior_gamma))
        return out

    def free_parameters(self) -> list[str]:
        return [name for name, prior in self.parameter_priors() if not is_spike(prior)]

    def with_weight(self, weight: float) -> "ModelSpec":
        return ModelSpec(self.family, self.prior_beta, self.prior_alpha, self.prior_gamma, weight, self.name)


def normalize_weights(models: list[ModelSpec]) -> list[ModelSpec]:
    total = sum(m.prior_weight for m in models)
    return [m.with_weight(m.prior_weight / total) for m in models]


# ---------------------------------------------------------------- serialization


def prior_to_dict(spec: PriorSpec) -> dict:
    if isinstance(spec, Normal):
        return {"kind": "normal", "mu": spec.mu, "sigma": spec.sigma}
    if isinstance(spec, TruncatedNormal):
        d = {"kind": "normal", "mu": spec.mu, "sigma": spec.sigma}
        if not math.isinf(spec.lower):
            d["lower"] = spec.lower
        if not math.isinf(spec.upper):
            d["upper"] = spec.upper
        return d
    if isinstance(spec, LogNormal):
        return {"kind": "lognormal", "mu": spec.mu_log, "sigma": spec.sigma_log}
    if isinstance(spec, Cauchy):
        return {"kind": "cauchy", "location": spec.location, "scale": spec.scale}
    if isinstance(spec, HalfCauchy):
        return {"kind": "halfcauchy", "scale": spec.scale}
    return {"kind": "spike", "value": spec.value}


_PRIOR_KEYS = {
    "normal": ({"mu", "sigma"}, {"lower", "upper"}),
    "lognormal": ({"mu", "sigma"}, set()),
    "cauchy": ({"location", "scale"}, set()),
    "halfcauchy": ({"scale"}, set()),
    "spike": ({"value"}, set()),
}


def prior_from_dict(d: dict) -> PriorSpec:
    """Parse a tagged prior record, e.g. ``{"kind": "normal", "mu": 0.3, "sigma": 0.15, "lower": 0}``."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError(f"prior must be an object with a 'kind' field, got {d!r}")
    kind = d["kind"]
    if kind not in _PRIOR_KEYS:
        raise ValueError(f"unknown prior kind {kind!r}")
    required, optional = _PRIOR_KEYS[kind]
    keys = set(d) - {"kind"}
    if missing := required - keys:
        raise ValueError(f"{kind} prior missing {sorted(missing)}")
    if extra := keys - required - optional:
        raise ValueError(f"{kind} prior has unknown keys {sorted(extra)}")
    vals = {}
    for k in keys:
        v = d[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"prior field {k!r} must be a number")
        vals[k] = float(v)
    if kind == "normal":
        if "lower" in vals or "upper" in vals:
            return TruncatedNormal(vals["mu"], vals["sigma"], vals.get("lower", -math.inf), vals.get("upper", math.inf))
        return Normal(vals["mu"], vals["sigma"])
    if kind == "lognormal":
        return LogNormal(vals["mu"], vals["sigma"])
    if kind == "cauchy":
        return Cauchy(vals["location"], vals["scale"])
    if kind == "halfcauchy":
        return HalfCauchy(vals["scale"])
    return Spike(vals["value"])
