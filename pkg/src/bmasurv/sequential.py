"""Sequential monitoring of the effect inclusion Bayes factor.

At every look the data are administratively censored at the look time and
the testing ensemble is re-fitted from scratch.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import fit_ensemble
from .families import FamilyKind, SurvivalDataset
from .priors import ModelSpec
from .sampler import SamplerSettings
from .seeding import derive_seed

log = logging.getLogger(__name__)

TRUNCATION_RANGE = (1.0 / 15.0, 15.0)


class Decision(enum.Enum):
    ACCEPT_H1 = "AcceptH1"
    ACCEPT_H0 = "AcceptH0"
    UNDECIDED = "Undecided"


class LookFailedWarning(RuntimeWarning):
    pass


def censor_at(data: SurvivalDataset, tau: float) -> SurvivalDataset:
    """Administrative censoring at ``tau``: everyone is assumed enrolled at time 0."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    t = np.minimum(data.time, tau)
    ev = data.event & (data.time <= tau)
    return SurvivalDataset(t, ev, data.treatment)


@dataclass(frozen=True)
class LookSchedule:
    horizon: float
    interval: float = 30.0

    def __post_init__(self):
        if not (self.interval > 0 and self.horizon > 0):
            raise ValueError("interval and horizon must be positive")
        if self.interval > self.horizon:
            raise ValueError("interval must not exceed horizon")

    def times(self) -> np.ndarray:
        """Look times k * interval up to the horizon; the horizon itself is always a look."""
        k = int(math.floor(self.horizon / self.interval + 1e-9))
        looks = [self.interval * (i + 1) for i in range(k)]
        if not looks or self.horizon - looks[-1] > 1e-9 * self.horizon:
            looks.append(float(self.horizon))
        return np.array(looks)


@dataclass(frozen=True)
class DecisionThresholds:
    bf10_upper: float
    bf01_upper: float

    def __post_init__(self):
        if not (self.bf10_upper > 1 and self.bf01_upper > 1):
            raise ValueError("decision thresholds must exceed 1")

    def decide(self, bf10: float) -> Decision:
        if bf10 >= self.bf10_upper:
            return Decision.ACCEPT_H1
        if bf10 > 0 and 1.0 / bf10 >= self.bf01_upper:
            return Decision.ACCEPT_H0
        if bf10 == 0 and math.isfinite(self.bf01_upper):
            return Decision.ACCEPT_H0
        return Decision.UNDECIDED


NEVER_STOP = DecisionThresholds(math.inf, math.inf)


@dataclass(frozen=True, eq=False)
class EvidenceTrajectory:
    look_times: np.ndarray
    bf10: np.ndarray
    posterior_family_probs: np.ndarray
    decision: Decision
    decision_time: float | None
    failed_looks: tuple[float, ...] = ()
    truncated: bool = False

    def __post_init__(self):
        if (self.decision is Decision.UNDECIDED) != (self.decision_time is None):
            raise ValueError("decision_time must be set exactly when a decision was made")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["look_time_days", "bf10"] + [f"prob_{f.label}" for f in FamilyKind] + ["decision_flag"])
        last = len(self.look_times) - 1
        for k, (t, bf) in enumerate(zip(self.look_times, self.bf10)):
            flag = self.decision.value if (k == last and self.decision is not Decision.UNDECIDED) else ""
            w.writerow([_fmt(t), _fmt(bf)] + [_fmt(p) for p in self.posterior_family_probs[k]] + [flag])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _family_row(result) -> np.ndarray:
    probs = result.family_posterior_probs()
    return np.array([probs[f] for f in FamilyKind])


def run_sequential(
    data: SurvivalDataset,
    models: Sequence[ModelSpec],
    schedule: LookSchedule,
    thresholds: DecisionThresholds = NEVER_STOP,
    settings: SamplerSettings = SamplerSettings(),
    seed: int | None = None,
    truncate: tuple[float, float] | None = None,
    threads: int = 1,
) -> EvidenceTrajectory:
    """Monitor the effect inclusion BF over the looks of ``schedule``.

    Look ``k`` fits the ensemble with seed ``derive_seed(seed, k)``, so a fixed-n
    analysis with that seed reproduces the look exactly. ``truncate`` stops the
    trajectory once BF10 leaves the given interval (a design-analysis speed-up;
    the decision is still only taken at ``thresholds``).
    """
    seed = settings.seed if seed is None else seed
    times, bfs, fams, failed = [], [], [], []
    decision, when, cut = Decision.UNDECIDED, None, False
    for k, tau in enumerate(schedule.times()):
        look_data = censor_at(data, float(tau))
        result = None
        for attempt in range(2):
            s = derive_seed(seed, k) if attempt == 0 else derive_seed(seed, k, 1)
            try:
                result = fit_ensemble(models, look_data, settings, seed=s, threads=threads)
                break
            except (RuntimeError, ValueError, FloatingPointError) as exc:
                log.warning("look %d (t=%g) attempt %d failed: %s", k, tau, attempt + 1, exc)
        if result is None:
            warnings.warn(f"look at t={tau:g} failed twice; skipped", LookFailedWarning, stacklevel=2)
            failed.append(float(tau))
            continue
        bf = result.inclusion_bf_effect
        times.append(float(tau))
        bfs.append(bf)
        fams.append(_family_row(result))
        decision = thresholds.decide(bf)
        if decision is not Decision.UNDECIDED:
            when = float(tau)
            break
        if truncate is not None and not (truncate[0] < bf < truncate[1]):
            cut = True
            break
    fam_mat = np.array(fams) if fams else np.empty((0, len(FamilyKind)))
    return EvidenceTrajectory(np.array(times), np.array(bfs), fam_mat, decision, when, tuple(failed), cut)
