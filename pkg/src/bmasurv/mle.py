"""Maximum-likelihood fitting of the AFT families, with AIC/BIC selection."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from . import _backend
from .families import FamilyKind, ParamVector, SurvivalDataset
from .seeding import rng_for

log = logging.getLogger(__name__)

N_RESTARTS = 5
GRAD_TOL = 1e-6


class Criterion(enum.Enum):
    AIC = "aic"
    BIC = "bic"


@dataclass(frozen=True, eq=False)
class MleFit:
    """ML estimates on the constrained scale.

    ``standard_errors`` is keyed by parameter name (``beta``, ``alpha``,
    ``gamma``); ``log_gamma_se`` is the SE of log gamma, used by the
    meta-analytic prior. SEs are ``None`` when the Hessian is singular.
    """

    family: FamilyKind
    estimates: ParamVector
    standard_errors: dict[str, float] | None
    log_lik: float
    aic: float
    bic: float
    converged: bool
    n_params: int
    n_obs: int
    log_gamma_se: float | None = None
    hessian: np.ndarray | None = None

    def wald_one_sided(self, alpha: float = 0.05) -> tuple[float, bool]:
        """z = beta / se(beta); rejects H0 when z > z_{1-alpha}."""
        if self.standard_errors is None or "beta" not in self.standard_errors:
            raise ValueError("treatment effect SE unavailable")
        z = self.estimates.beta / self.standard_errors["beta"]
        return z, bool(z > stats.norm.ppf(1.0 - alpha))


def _names(family: FamilyKind, include_treatment: bool) -> list[str]:
    names = ["beta"] if include_treatment else []
    names.append("alpha")
    if family.has_aux:
        names.append("log_gamma")
    return names


def _negloglik_fn(family: FamilyKind, data: SurvivalDataset, include_treatment: bool):
    lt, ev, x, w = data.compressed()
    t = np.exp(lt)
    kern = _backend.kernels
    fam = int(family)

    def f(theta: np.ndarray) -> float:
        i = 0
        beta = 0.0
        if include_treatment:
            beta = theta[0]
            i = 1
        alpha = theta[i]
        g = math.exp(theta[i + 1]) if family.has_aux else 1.0
        if not (math.isfinite(g) and g > 0):
            return math.inf
        val = -kern.loglik(fam, t, ev, x, w, float(alpha), float(beta), g)
        return val if math.isfinite(val) else math.inf

    return f


def _steps(x: np.ndarray) -> np.ndarray:
    return np.maximum(1e-5, 1e-5 * np.abs(x))


def numerical_gradient(f, x: np.ndarray) -> np.ndarray:
    h = _steps(x)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2 * h[i])
    return g


def numerical_hessian(f, x: np.ndarray) -> np.ndarray:
    """Central-difference Hessian with step max(1e-5, 1e-5 |x_i|)."""
    d = x.shape[0]
    h = _steps(x)
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return H


def _partial(f, x: np.ndarray, i: int) -> tuple[float, float, float]:
    h = max(1e-5, 1e-5 * abs(x[i]))
    e = np.zeros_like(x)
    e[i] = h
    fp, f0, fm = f(x + e), f(x), f(x - e)
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / h**2, f0


def _newton_polish(f, x: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, float]:
    """Coordinate-wise Newton steps until the gradient is below GRAD_TOL.

    Near the optimum the objective changes by less than its rounding noise,
    so a step is accepted when it shrinks that coordinate's derivative
    without raising the objective by more than a few ulps.
    """
    x = x.copy()
    gmax = math.inf
    for _ in range(max_sweeps):
        for i in range(x.shape[0]):
            g, c, fx = _partial(f, x, i)
            if not (c > 0 and math.isfinite(g)):
                continue
            step = -g / c
            slack = 64 * np.finfo(float).eps * max(abs(fx), 1.0)
            for _ in range(30):
                cand = x.copy()
                cand[i] += step
                gc, _, fc = _partial(f, cand, i)
                if fc < fx - slack or (fc <= fx + slack and abs(gc) < abs(g)):
                    x = cand
                    break
                step *= 0.5
        gmax = float(np.max(np.abs(numerical_gradient(f, x))))
        if gmax < GRAD_TOL:
            break
    return x, gmax


def _start(family: FamilyKind, data: SurvivalDataset, include_treatment: bool) -> np.ndarray:
    total = float(np.sum(data.time))
    alpha0 = math.log(total / max(data.n_events, 1))
    x0 = [0.0] if include_treatment else []
    x0.append(alpha0)
    if family.has_aux:
        x0.append(0.0)
    return np.array(x0)


def fit_mle(family, data: SurvivalDataset, include_treatment: bool = True, seed: int = 0) -> MleFit:
    """Maximize the right-censored log-likelihood (Nelder-Mead then Newton polish).

    Up to five jittered restarts are made when the polished gradient is not
    below tolerance.
    """
    family = FamilyKind.parse(family)
    if data.n_events < 1:
        raise ValueError("maximum likelihood needs at least one event")
    if include_treatment:
        n0, n1 = data.arm_counts()
        if n0 == 0 or n1 == 0:
            raise ValueError("both treatment arms must be present")
    f = _negloglik_fn(family, data, include_treatment)
    names = _names(family, include_treatment)
    rng = rng_for(seed, 0)
    x0 = _start(family, data, include_treatment)
    best_x, best_f, converged = None, math.inf, False
    for attempt in range(N_RESTARTS + 1):
        start = x0 if attempt == 0 else x0 + rng.normal(0.0, 0.5, size=x0.shape)
        res = optimize.minimize(f, start, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000})
        x, gmax = _newton_polish(f, res.x)
        fx = f(x)
        if fx < best_f:
            best_x, best_f = x, fx
        if gmax < GRAD_TOL:
            converged = True
            break
        log.debug("%s MLE attempt %d: gradient %.2e", family.label, attempt, gmax)
    x = best_x
    params = dict(zip(names, x))
    k = len(names)
    n = len(data)
    ll = -best_f

    H = numerical_hessian(f, x)
    ses = None
    lg_se = None
    try:
        eig = np.linalg.eigvalsh(H)
        if not np.all(eig > 0):
            raise np.linalg.LinAlgError("Hessian not positive definite")
        cov = np.linalg.inv(H)
        sd = np.sqrt(np.diag(cov))
        ses = {}
        for j, name in enumerate(names):
            if name == "log_gamma":
                lg_se = float(sd[j])
                ses["gamma"] = float(math.exp(x[j]) * sd[j])
            else:
                ses[name] = float(sd[j])
    except np.linalg.LinAlgError:
        log.warning("%s MLE: singular Hessian, standard errors unavailable", family.label)
        if converged:
            converged = False

    est = ParamVector(
        beta=float(params.get("beta", 0.0)),
        alpha=float(params["alpha"]),
        gamma=float(math.exp(params["log_gamma"])) if family.has_aux else None,
    )
    return MleFit(family, est, ses, ll, 2 * k - 2 * ll, k * math.log(n) - 2 * ll, converged, k, n, lg_se, H)


def select_model(fits: list[MleFit], criterion: Criterion | str = Criterion.AIC) -> int:
    """Index of the fit minimizing the criterion; ties go to the earliest family."""
    if not fits:
        raise ValueError("no fits to select from")
    crit = Criterion(criterion) if not isinstance(criterion, Criterion) else criterion
    vals = [getattr(f, crit.value) for f in fits]
    best = min(vals)
    tied = [i for i, v in enumerate(vals) if v == best]
    return min(tied, key=lambda i: (int(fits[i].family), i))
