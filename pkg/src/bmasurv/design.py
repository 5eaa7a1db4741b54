"""Bayes factor design analysis.

Simulate trials from a generating ensemble, run the testing analysis on each
(fixed-n or sequential), summarize error rates and decision times, and
calibrate decision thresholds for frequentist error rates.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ensemble import EnsembleError, fit_ensemble
from .families import FamilyKind, SurvivalDataset, sample_time
from .priors import ModelSpec, normalize_weights, sample_prior
from .sampler import SamplerSettings
from .seeding import derive_seed, rng_for
from .sequential import (
    NEVER_STOP,
    TRUNCATION_RANGE,
    Decision,
    DecisionThresholds,
    LookSchedule,
    run_sequential,
)

log = logging.getLogger(__name__)

DAYS_PER_MONTH = 30.0


class Hypothesis(enum.Enum):
    H0 = "H0"
    H1 = "H1"


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CensoringSpec:
    """Weibull(shape, scale) censoring times plus an administrative cutoff (days)."""

    shape: float = 1.5
    scale: float = math.inf
    cutoff: float = math.inf

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0 and self.cutoff > 0):
            raise ValueError("censoring shape, scale and cutoff must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        e = rng.standard_exponential(size)
        if math.isinf(self.scale):
            return np.full(size, math.inf)
        return self.scale * e ** (1.0 / self.shape)

    @classmethod
    def with_median(cls, median: float, shape: float = 1.5, cutoff: float = math.inf) -> "CensoringSpec":
        return cls(shape, median / math.log(2.0) ** (1.0 / shape), cutoff)


@dataclass(frozen=True)
class BfdaScenario:
    generating_ensemble: tuple[ModelSpec, ...]
    hypothesis: Hypothesis
    n_participants: int
    censoring: CensoringSpec = CensoringSpec()
    replications: int = 100
    schedule: LookSchedule | None = None
    master_seed: int = 0
    leave_one_family_out: bool = False

    def __post_init__(self):
        object.__setattr__(self, "generating_ensemble", tuple(self.generating_ensemble))
        if not self.generating_ensemble:
            raise ValueError("generating ensemble is empty")
        if self.replications < 0:
            raise ValueError("replications must be non-negative")
        if self.n_participants < 2:
            raise ValueError("a trial needs at least two participants")
        w = np.array([m.prior_weight for m in self.generating_ensemble])
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("generating model weights must sum to 1")

    @property
    def sequential(self) -> bool:
        return self.schedule is not None


def hypothesis_ensemble(models: Sequence[ModelSpec], hypothesis: Hypothesis) -> tuple[ModelSpec, ...]:
    """The null or effect half of a testing ensemble, with weights renormalized."""
    keep = [m for m in models if m.assumes_effect == (hypothesis is Hypothesis.H1)]
    if not keep:
        raise ValueError(f"no models for {hypothesis.value}")
    return tuple(normalize_weights(keep))


@dataclass(frozen=True)
class TrialTruth:
    model_index: int
    family: FamilyKind
    beta: float
    alpha: float
    gamma: float | None


def _simulate(scenario: BfdaScenario, replication_index: int) -> tuple[SurvivalDataset, TrialTruth]:
    rng = rng_for(scenario.master_seed, replication_index, 0)
    models = scenario.generating_ensemble
    w = np.array([m.prior_weight for m in models])
    j = int(rng.choice(len(models), p=w / w.sum())) if len(models) > 1 else 0
    m = models[j]
    beta = float(sample_prior(m.prior_beta, rng))
    alpha = float(sample_prior(m.prior_alpha, rng))
    gamma = float(sample_prior(m.prior_gamma, rng)) if m.family.has_aux else None
    n = scenario.n_participants
    x = np.zeros(n, dtype=np.int8)
    x[n // 2:] = 1
    t = sample_time(m.family, alpha + beta * x, gamma, rng)
    c = np.minimum(scenario.censoring.sample(rng, n), scenario.censoring.cutoff)
    obs = np.minimum(t, c)
    return SurvivalDataset(obs, t <= c, x), TrialTruth(j, m.family, beta, alpha, gamma)


def simulate_trial(scenario: BfdaScenario, replication_index: int) -> SurvivalDataset:
    """One simulated trial: a generating model is drawn by weight, then its
    parameters from their priors; the first n//2 participants are controls."""
    return _simulate(scenario, replication_index)[0]


# ---------------------------------------------------------------- running


@dataclass(frozen=True)
class BfdaAnalysis:
    models: tuple[ModelSpec, ...]
    settings: SamplerSettings = SamplerSettings()
    thresholds: DecisionThresholds | None = None
    truncate: tuple[float, float] | None = TRUNCATION_RANGE

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))

    def models_for(self, family: FamilyKind, leave_out: bool) -> list[ModelSpec]:
        if not leave_out:
            return list(self.models)
        keep = [m for m in self.models if m.family is not family]
        if not keep:
            raise ValueError("leaving out the generating family removes every model")
        return normalize_weights(keep)


@dataclass(frozen=True, eq=False)
class BfdaResult:
    records_h0: list[dict] = field(default_factory=list)
    records_h1: list[dict] = field(default_factory=list)

    @staticmethod
    def _ok(records):
        return [r for r in records if r["status"] == "ok"]

    def bf10(self, hypothesis: Hypothesis) -> np.ndarray:
        recs = self.records_h0 if hypothesis is Hypothesis.H0 else self.records_h1
        return np.array([r["bf10"] for r in self._ok(recs)], dtype=np.float64)

    def trajectories(self, hypothesis: Hypothesis) -> list[np.ndarray]:
        recs = self.records_h0 if hypothesis is Hypothesis.H0 else self.records_h1
        return [np.array(r["bf10_trajectory"], dtype=np.float64) for r in self._ok(recs)]

    def decisions(self, hypothesis: Hypothesis) -> list[tuple[Decision, float | None]]:
        recs = self.records_h0 if hypothesis is Hypothesis.H0 else self.records_h1
        return [(Decision(r["decision"]), r["decision_time"]) for r in self._ok(recs)]

    def failures(self) -> dict[str, int]:
        return {h: sum(r["status"] != "ok" for r in recs)
                for h, recs in (("H0", self.records_h0), ("H1", self.records_h1))}

    def to_ndjson(self) -> str:
        lines = [json.dumps(r, sort_keys=True, allow_nan=True) for r in self.records_h0 + self.records_h1]
        return "".join(line + "\n" for line in lines)


def _truth_dict(truth: TrialTruth) -> dict:
    return {"family": truth.family.label, "beta": truth.beta, "alpha": truth.alpha, "gamma": truth.gamma}


def _run_one(scenario: BfdaScenario, analysis: BfdaAnalysis, rep: int) -> dict:
    seed = derive_seed(scenario.master_seed, rep, 1)
    rec = {"hypothesis": scenario.hypothesis.value, "replication": rep, "seed": seed}
    try:
        data, truth = _simulate(scenario, rep)
        rec["truth"] = _truth_dict(truth)
        rec["n_events"] = data.n_events
        models = analysis.models_for(truth.family, scenario.leave_one_family_out)
        if scenario.sequential:
            traj = run_sequential(data, models, scenario.schedule, analysis.thresholds or NEVER_STOP,
                                  analysis.settings, seed=seed, truncate=analysis.truncate)
            rec.update({
                "look_times": traj.look_times.tolist(),
                "bf10_trajectory": traj.bf10.tolist(),
                "bf10": float(traj.bf10[-1]) if traj.bf10.size else math.nan,
                "decision": traj.decision.value,
                "decision_time": traj.decision_time,
                "truncated": traj.truncated,
                "failed_looks": list(traj.failed_looks),
            })
        else:
            res = fit_ensemble(models, data, analysis.settings, seed=seed)
            bf = res.inclusion_bf_effect
            decision = analysis.thresholds.decide(bf) if analysis.thresholds else Decision.UNDECIDED
            mix = res.mixture_beta().summary()
            rec.update({
                "bf10": bf,
                "decision": decision.value,
                "decision_time": None,
                "beta_mean": mix["mean"],
                "beta_q025": mix["q025"],
                "beta_q975": mix["q975"],
            })
        rec["status"] = "ok"
    except (RuntimeError, ValueError, FloatingPointError, EnsembleError) as exc:
        log.warning("replication %d (%s) failed: %s", rep, scenario.hypothesis.value, exc)
        rec["status"] = "failed"
        rec["error"] = str(exc)
    return rec


def run_scenario(scenario: BfdaScenario, analysis: BfdaAnalysis, threads: int = 1,
                 replications: Iterable[int] | None = None) -> list[dict]:
    reps = list(range(scenario.replications)) if replications is None else list(replications)
    if threads > 1 and len(reps) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda r: _run_one(scenario, analysis, r), reps))
    return [_run_one(scenario, analysis, r) for r in reps]


def run_bfda(scenario_h0: BfdaScenario, scenario_h1: BfdaScenario, analysis: BfdaAnalysis,
             threads: int = 1) -> BfdaResult:
    """Replicated testing analyses under both hypotheses.

    Records are plain dicts (one per replication) ready for NDJSON output;
    failed replications are kept with ``status == "failed"``.
    """
    if scenario_h0.n_participants != scenario_h1.n_participants:
        raise ValueError("scenarios must share the sample size")
    if scenario_h0.sequential != scenario_h1.sequential:
        raise ValueError("scenarios must share the design")
    return BfdaResult(run_scenario(scenario_h0, analysis, threads), run_scenario(scenario_h1, analysis, threads))


# ---------------------------------------------------------------- calibration


@dataclass(frozen=True)
class CalibrationResult:
    bf10_threshold: float
    bf01_threshold: float
    achieved_false_positive: float
    achieved_false_positive_se: float
    achieved_false_negative: float
    achieved_false_negative_se: float

    def thresholds(self) -> DecisionThresholds:
        return DecisionThresholds(self.bf10_threshold, self.bf01_threshold)


def nearest_rank(values, p: float) -> float:
    """Lower nearest-rank quantile: the ceil(p n)-th smallest value."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    if x.size == 0:
        raise ValueError("no samples")
    k = max(1, math.ceil(p * x.size - 1e-9))
    return float(x[min(k, x.size) - 1])


def _rate(k: int, n: int) -> tuple[float, float]:
    p = k / n
    return p, math.sqrt(p * (1 - p) / n)


def calibrate_fixed(bf_h0, bf_h1, alpha: float = 0.05, beta: float = 0.10) -> CalibrationResult:
    """Thresholds from the (1 - alpha) quantile of BF10 under H0 and the beta
    quantile of BF10 under H1 (reciprocal), both clamped to at least 1.

    A trial is decided for H1 when BF10 >= bf10_threshold and for H0 when
    BF01 >= bf01_threshold.
    """
    h0 = np.asarray(bf_h0, dtype=np.float64)
    h1 = np.asarray(bf_h1, dtype=np.float64)
    if h0.size == 0 or h1.size == 0:
        raise ValueError("calibration needs samples under both hypotheses")
    up = max(1.0, nearest_rank(h0, 1.0 - alpha))
    q = nearest_rank(h1, beta)
    low = max(1.0, 1.0 / q) if q > 0 else math.inf
    fp, fp_se = _rate(int(np.count_nonzero(h0 >= up)), h0.size)
    with np.errstate(divide="ignore"):
        fn, fn_se = _rate(int(np.count_nonzero(1.0 / h1 >= low)), h1.size)
    return CalibrationResult(up, low, fp, fp_se, fn, fn_se)


def first_decision(trajectory: np.ndarray, thresholds: DecisionThresholds) -> tuple[Decision, int | None]:
    for k, bf in enumerate(trajectory):
        d = thresholds.decide(float(bf))
        if d is not Decision.UNDECIDED:
            return d, k
    return Decision.UNDECIDED, None


def _crossing_rate(trajs, upper, lower, wrong: Decision) -> float:
    th = DecisionThresholds(upper, lower)
    return sum(first_decision(t, th)[0] is wrong for t in trajs) / len(trajs)


def threshold_grid(max_value: float = 1000.0, ratio: float = 1.1) -> np.ndarray:
    j = np.arange(1, int(math.floor(math.log(max_value) / math.log(ratio) + 1e-9)) + 1)
    return ratio ** j


def calibrate_sequential(trajectories_h0, trajectories_h1, alpha: float = 0.05, beta: float = 0.10,
                         grid: np.ndarray | None = None) -> CalibrationResult:
    """Smallest (upper, lower) pair on the grid with H0 upward crossings <= alpha
    and H1 downward crossings <= beta, where a trajectory's decision is its first
    crossing of either bound.

    Found by fixed-point iteration started at the bottom of the grid; both
    crossing rates are monotone in the thresholds, so this reaches the
    componentwise-smallest feasible pair.
    """
    h0 = [np.asarray(t, dtype=np.float64) for t in trajectories_h0]
    h1 = [np.asarray(t, dtype=np.float64) for t in trajectories_h1]
    if not h0 or not h1:
        raise ValueError("calibration needs trajectories under both hypotheses")
    grid = threshold_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    grid = np.sort(grid[grid > 1.0])
    if grid.size == 0:
        raise ValueError("threshold grid must contain values above 1")

    def smallest(fn) -> int | None:
        for i, g in enumerate(grid):
            if fn(g):
                return i
        return None

    iu, il = 0, 0
    for _ in range(4 * grid.size + 4):
        nu = smallest(lambda u: _crossing_rate(h0, u, grid[il], Decision.ACCEPT_H1) <= alpha)
        if nu is None:
            raise CalibrationError(_infeasible(h0, h1, grid[-1], grid[il]))
        nl = smallest(lambda v: _crossing_rate(h1, grid[nu], v, Decision.ACCEPT_H0) <= beta)
        if nl is None:
            raise CalibrationError(_infeasible(h0, h1, grid[nu], grid[-1]))
        if (nu, nl) == (iu, il):
            break
        iu, il = max(iu, nu), max(il, nl)
    up, low = float(grid[iu]), float(grid[il])
    n0 = sum(first_decision(t, DecisionThresholds(up, low))[0] is Decision.ACCEPT_H1 for t in h0)
    n1 = sum(first_decision(t, DecisionThresholds(up, low))[0] is Decision.ACCEPT_H0 for t in h1)
    fp, fp_se = _rate(n0, len(h0))
    fn, fn_se = _rate(n1, len(h1))
    return CalibrationResult(up, low, fp, fp_se, fn, fn_se)


def _infeasible(h0, h1, up, low) -> str:
    fp = _crossing_rate(h0, up, low, Decision.ACCEPT_H1)
    fn = _crossing_rate(h1, up, low, Decision.ACCEPT_H0)
    return (f"no feasible threshold pair on the grid; best infeasible pair BF10={up:.4g}, "
            f"BF01={low:.4g} with error rates ({fp:.3f}, {fn:.3f})")


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


@dataclass(frozen=True)
class DesignMetrics:
    n: int
    error_rate: Estimate
    correct_rate: Estimate
    undecided: Estimate
    mean_decision_time: Estimate | None

    @property
    def power(self) -> Estimate:
        return self.correct_rate

    def mean_decision_months(self) -> Estimate | None:
        if self.mean_decision_time is None:
            return None
        return Estimate(self.mean_decision_time.value / DAYS_PER_MONTH, self.mean_decision_time.se / DAYS_PER_MONTH)


def evaluate_design(decisions: Sequence[tuple[Decision, float | None]], truth: Hypothesis) -> DesignMetrics:
    """Error, correct-decision and undecided proportions (binomial SEs) and the
    mean decision time over decided replications (SE = sd / sqrt(n))."""
    if not decisions:
        raise ValueError("no decisions to evaluate")
    n = len(decisions)
    right = Decision.ACCEPT_H1 if truth is Hypothesis.H1 else Decision.ACCEPT_H0
    wrong = Decision.ACCEPT_H0 if truth is Hypothesis.H1 else Decision.ACCEPT_H1
    k_right = sum(d is right for d, _ in decisions)
    k_wrong = sum(d is wrong for d, _ in decisions)
    k_und = n - k_right - k_wrong
    times = np.array([t for d, t in decisions if d is not Decision.UNDECIDED and t is not None], dtype=np.float64)
    mt = None
    if times.size:
        se = float(np.std(times, ddof=1) / math.sqrt(times.size)) if times.size > 1 else math.nan
        mt = Estimate(float(times.mean()), se)
    return DesignMetrics(n, Estimate(*_rate(k_wrong, n)), Estimate(*_rate(k_right, n)),
                         Estimate(*_rate(k_und, n)), mt)


@dataclass(frozen=True)
class EstimatorMetrics:
    bias: Estimate
    rmse: Estimate
    coverage: Estimate


def _rmse(err: np.ndarray) -> float:
    return float(math.sqrt(np.mean(err * err)))


def jackknife_se(values: np.ndarray, stat) -> float:
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    loo = np.array([stat(np.delete(x, i)) for i in range(n)])
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def estimator_metrics(estimates, truths, ci_bounds) -> EstimatorMetrics:
    """Bias, RMSE (jackknife SE) and interval coverage of a point estimator.

    ``ci_bounds`` is a sequence of (lower, upper) pairs.
    """
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    ci = np.asarray(ci_bounds, dtype=np.float64).reshape(-1, 2)
    if not (est.shape == tru.shape and ci.shape[0] == est.shape[0]):
        raise ValueError("estimates, truths and intervals must be aligned")
    n = est.size
    if n < 2:
        raise ValueError("at least two estimates are needed")
    err = est - tru
    bias = Estimate(float(err.mean()), float(np.std(err, ddof=1) / math.sqrt(n)))
    rmse = Estimate(_rmse(err), jackknife_se(err, _rmse))
    covered = int(np.count_nonzero((ci[:, 0] <= tru) & (tru <= ci[:, 1])))
    return EstimatorMetrics(bias, rmse, Estimate(*_rate(covered, n)))
