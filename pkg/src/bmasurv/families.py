"""Parametric AFT survival families and the right-censored log-likelihood.

Every family is written as ``T = exp(eta) * T0`` with a unit-scale baseline
``T0``:

=============  ==========================================
exponential    S0(z) = exp(-z)
weibull        S0(z) = exp(-z**gamma)
lognormal      log T0 ~ Normal(0, gamma)  (gamma = sd)
loglogistic    S0(z) = 1 / (1 + z**gamma)
gamma          T0 ~ Gamma(shape=gamma, rate=1)
=============  ==========================================

``eta = alpha + beta * x`` is the linear predictor on the log-time scale.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import special as sc

from . import _backend


class DomainError(ValueError):
    """Argument outside the mathematical domain of the function."""


class SpecificationError(ValueError):
    """Parameters inconsistent with the chosen family."""


class FamilyKind(enum.IntEnum):
    EXPONENTIAL = 0
    WEIBULL = 1
    LOGNORMAL = 2
    LOGLOGISTIC = 3
    GAMMA = 4

    @property
    def has_aux(self) -> bool:
        return self is not FamilyKind.EXPONENTIAL

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value: "str | int | FamilyKind") -> "FamilyKind":
        if isinstance(value, FamilyKind):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower().replace("-", "").replace("_", "").replace(" ", "")
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown survival family {value!r}") from None


_LABELS = {
    FamilyKind.EXPONENTIAL: "exponential",
    FamilyKind.WEIBULL: "weibull",
    FamilyKind.LOGNORMAL: "lognormal",
    FamilyKind.LOGLOGISTIC: "loglogistic",
    FamilyKind.GAMMA: "gamma",
}
_ALIASES = {
    "exponential": FamilyKind.EXPONENTIAL,
    "exp": FamilyKind.EXPONENTIAL,
    "weibull": FamilyKind.WEIBULL,
    "lognormal": FamilyKind.LOGNORMAL,
    "loglogistic": FamilyKind.LOGLOGISTIC,
    "gamma": FamilyKind.GAMMA,
}


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored survival data with a binary treatment indicator.

    ``time`` in days, ``event`` True for an observed event (False means
    right-censored), ``treatment`` 0 for the comparator arm and 1 for the
    experimental arm.
    """

    time: np.ndarray
    event: np.ndarray
    treatment: np.ndarray

    def __post_init__(self):
        time = np.array(self.time, dtype=np.float64).reshape(-1)
        event = np.array(self.event).reshape(-1)
        treatment = np.array(self.treatment).reshape(-1)
        if not (time.shape == event.shape == treatment.shape):
            raise ValueError("time, event and treatment must have equal length")
        if time.size and not (np.all(np.isfinite(time)) and np.all(time > 0)):
            raise DomainError("survival times must be positive and finite")
        if event.size and not np.all(np.isin(event, (0, 1))):
            raise ValueError("event flags must be 0/1 or boolean")
        if treatment.size and not np.all(np.isin(treatment, (0, 1))):
            raise ValueError("treatment must be coded 0/1")
        for name, arr in (("time", time), ("event", event.astype(bool)), ("treatment", treatment.astype(np.int8))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls) -> "SurvivalDataset":
        return cls(np.empty(0), np.empty(0, dtype=bool), np.empty(0, dtype=np.int8))

    def __len__(self) -> int:
        return int(self.time.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurvivalDataset):
            return NotImplemented
        return (
            np.array_equal(self.time, other.time)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.treatment, other.treatment)
        )

    __hash__ = None

    @property
    def n_events(self) -> int:
        return int(np.count_nonzero(self.event))

    def arm_counts(self) -> tuple[int, int]:
        n1 = int(np.count_nonzero(self.treatment))
        return len(self) - n1, n1

    def concat(self, other: "SurvivalDataset") -> "SurvivalDataset":
        return SurvivalDataset(
            np.concatenate([self.time, other.time]),
            np.concatenate([self.event, other.event]),
            np.concatenate([self.treatment, other.treatment]),
        )

    def compressed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Unique (log time, event, treatment) rows with multiplicities.

        Administratively censored records share a time, so this shrinks interim
        datasets considerably. Row order is lexicographic and deterministic.
        """
        if len(self) == 0:
            z = np.empty(0)
            return z, z, z, z
        rows = np.column_stack([self.time, self.event.astype(np.float64), self.treatment.astype(np.float64)])
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        return np.log(uniq[:, 0]), uniq[:, 1].copy(), uniq[:, 2].copy(), counts.astype(np.float64)


@dataclass(frozen=True)
class ParamVector:
    beta: float
    alpha: float
    gamma: float | None = None

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise DomainError("gamma must be positive")


def _aux(family: FamilyKind, gamma) -> float:
    family = FamilyKind.parse(family)
    if family.has_aux:
        if gamma is None:
            raise SpecificationError(f"{family.label} requires an auxiliary parameter")
        gamma = float(gamma)
        if not (gamma > 0 and math.isfinite(gamma)):
            raise DomainError("gamma must be positive and finite")
        return gamma
    return 1.0


def _times(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise DomainError("t must be positive and finite")
    return t


def _out(value: np.ndarray, scalar: bool):
    return float(np.reshape(value, -1)[0]) if scalar else value


def log_survival(family, t, eta=0.0, gamma=None):
    """log S(t | eta, gamma). Scalars in, float out; arrays broadcast."""
    family = FamilyKind.parse(family)
    g = _aux(family, gamma)
    scalar = np.ndim(t) == 0 and np.ndim(eta) == 0
    res = _backend.kernels.log_survival(int(family), _times(t), eta, g)
    return _out(res, scalar)


def log_density(family, t, eta=0.0, gamma=None):
    family = FamilyKind.parse(family)
    g = _aux(family, gamma)
    scalar = np.ndim(t) == 0 and np.ndim(eta) == 0
    res = _backend.kernels.log_density(int(family), _times(t), eta, g)
    return _out(res, scalar)


def log_hazard(family, t, eta=0.0, gamma=None):
    """log h(t | eta, gamma) = log f - log S.

    Raises DomainError where the survival function underflows to zero.
    """
    family = FamilyKind.parse(family)
    g = _aux(family, gamma)
    scalar = np.ndim(t) == 0 and np.ndim(eta) == 0
    t = _times(t)
    ls = _backend.kernels.log_survival(int(family), t, eta, g)
    if np.any(np.isneginf(ls)):
        raise DomainError("survival underflows to 0; hazard undefined in floating point")
    res = _backend.kernels.log_density(int(family), t, eta, g) - ls
    return _out(res, scalar)


def _gamma_baseline_quantile(p: np.ndarray, g: float) -> np.ndarray:
    kern = _backend.kernels
    target = np.log1p(-p)
    lo = np.zeros_like(p)
    hi = np.full_like(p, max(1.0, g))
    for _ in range(2000):
        above = kern.log_gamma_q(g, hi) > target
        if not above.any():
            break
        lo = np.where(above, hi, lo)
        hi = np.where(above, 2.0 * hi, hi)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        right = kern.log_gamma_q(g, mid) > target
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
        if np.all(hi - lo <= 1e-6 * hi):
            break
    z = 0.5 * (lo + hi)
    lgam = math.lgamma(g)
    for _ in range(50):
        lq = kern.log_gamma_q(g, z)
        log_h = (g - 1.0) * np.log(z) - z - lgam - lq
        step = (lq - target) * np.exp(-log_h)
        z_new = np.clip(z + step, lo, hi)
        done = np.all(np.abs(z_new - z) <= 1e-15 * z_new)
        z = z_new
        if done:
            break
    return z


def _baseline_quantile(family: FamilyKind, p: np.ndarray, g: float) -> np.ndarray:
    if family is FamilyKind.EXPONENTIAL:
        return -np.log1p(-p)
    if family is FamilyKind.WEIBULL:
        return (-np.log1p(-p)) ** (1.0 / g)
    if family is FamilyKind.LOGNORMAL:
        return np.exp(g * sc.ndtri(p))
    if family is FamilyKind.LOGLOGISTIC:
        return np.exp((np.log(p) - np.log1p(-p)) / g)
    return _gamma_baseline_quantile(p, g)


def quantile(family, p, eta=0.0, gamma=None):
    """Time t with P(T <= t) = p."""
    family = FamilyKind.parse(family)
    g = _aux(family, gamma)
    scalar = np.ndim(p) == 0 and np.ndim(eta) == 0
    p = np.asarray(p, dtype=np.float64)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("p must lie strictly inside (0, 1)")
    p, eta = np.broadcast_arrays(p, np.asarray(eta, dtype=np.float64))
    res = np.exp(eta) * _baseline_quantile(family, np.ascontiguousarray(p), g)
    return _out(res, scalar)


_TINY = np.nextafter(0.0, 1.0)


def sample_time(family, eta=0.0, gamma=None, rng: np.random.Generator | None = None, size=None):
    """Draw survival times by inversion, ``quantile(U)`` with ``U = rng.random()``."""
    if rng is None:
        raise ValueError("a seeded numpy Generator is required")
    family = FamilyKind.parse(family)
    g = _aux(family, gamma)
    if size is None and np.ndim(eta) > 0:
        size = np.shape(eta)
    u = np.maximum(rng.random(size), _TINY)
    if np.ndim(u) == 0 and np.ndim(eta) == 0:
        return float(quantile(family, float(u), eta, g if family.has_aux else None))
    u, eta = np.broadcast_arrays(np.asarray(u, dtype=np.float64), np.asarray(eta, dtype=np.float64))
    return np.exp(eta) * _baseline_quantile(family, np.ascontiguousarray(u), g)


def log_likelihood(data: SurvivalDataset, family, params: ParamVector) -> float:
    """Right-censored log-likelihood: sum of event * log h + log S over records."""
    family = FamilyKind.parse(family)
    g = _aux(family, params.gamma)
    if len(data) == 0:
        return 0.0
    w = np.ones(len(data))
    return float(
        _backend.kernels.loglik(
            int(family),
            data.time,
            data.event.astype(np.float64),
            data.treatment.astype(np.float64),
            w,
            float(params.alpha),
            float(params.beta),
            g,
        )
    )


def families_from(names: Iterable) -> list[FamilyKind]:
    return [FamilyKind.parse(n) for n in names]
