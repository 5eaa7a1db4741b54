"""Strict JSON analysis configuration and CSV data ingestion.

Every object in a configuration is checked for unknown keys and value types
before any computation starts.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .design import BfdaAnalysis, BfdaScenario, CensoringSpec, Hypothesis, hypothesis_ensemble
from .ensemble import TABLE1_PRIORS, TESTING_BETA, estimation_ensemble, testing_ensemble
from .families import FamilyKind, SurvivalDataset
from .priors import ModelSpec, is_spike, prior_from_dict, prior_to_dict
from .sampler import SamplerSettings
from .sequential import TRUNCATION_RANGE, DecisionThresholds, LookSchedule

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ---------------------------------------------------------------- csv


def ingest_csv(path: str | os.PathLike) -> SurvivalDataset:
    """Read a ``time,event,group`` CSV. Row numbers in errors count data rows from 1."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["time", "event", "group"]:
            raise DataError(f"{path}: header must be exactly 'time,event,group', got {','.join(header)!r}")
        times, events, groups = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}: row {row_no}: expected 3 columns, got {len(row)}")
            try:
                t = float(row[0])
            except ValueError:
                raise DataError(f"{path}: row {row_no}: time {row[0]!r} is not numeric") from None
            if not (math.isfinite(t) and t > 0):
                raise DataError(f"{path}: row {row_no}: time must be positive, got {row[0]!r}")
            e, g = row[1].strip(), row[2].strip()
            if e not in ("0", "1"):
                raise DataError(f"{path}: row {row_no}: event must be 0 or 1, got {row[1]!r}")
            if g not in ("0", "1"):
                raise DataError(f"{path}: row {row_no}: group must be 0 or 1, got {row[2]!r}")
            times.append(t)
            events.append(e == "1")
            groups.append(int(g))
    data = SurvivalDataset(np.array(times), np.array(events, dtype=bool), np.array(groups, dtype=np.int8))
    n0, n1 = data.arm_counts()
    log.info("read %d records from %s (%d events; arms %d/%d)", len(data), path, data.n_events, n0, n1)
    return data


def format_float(x: float) -> str:
    return "%.17g" % x


def write_csv_text(data: SurvivalDataset) -> str:
    lines = ["time,event,group"]
    for t, e, g in zip(data.time, data.event, data.treatment):
        lines.append(f"{format_float(float(t))},{int(e)},{int(g)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- helpers


def _check_keys(obj: Any, where: str, required: set[str], optional: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing {sorted(missing)}")
    extra = set(obj) - required - set(optional)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    return obj


def _num(obj: dict, key: str, where: str, default=None, positive=False, integer=False) -> Any:
    if key not in obj:
        if default is None:
            raise ConfigError(f"{where}: missing {key!r}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number")
    if integer and (not isinstance(v, int)):
        raise ConfigError(f"{where}.{key}: expected an integer")
    if positive and not v > 0:
        raise ConfigError(f"{where}.{key}: must be positive")
    return v


def _prior(obj, where: str):
    try:
        return prior_from_dict(obj)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _family(name, where: str) -> FamilyKind:
    try:
        return FamilyKind.parse(name)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _model(obj, where: str) -> ModelSpec:
    _check_keys(obj, where, {"family", "beta", "alpha", "weight"}, {"gamma", "name"})
    fam = _family(obj["family"], where + ".family")
    gamma = _prior(obj["gamma"], where + ".gamma") if "gamma" in obj else None
    try:
        return ModelSpec(fam, _prior(obj["beta"], where + ".beta"), _prior(obj["alpha"], where + ".alpha"), gamma,
                         float(_num(obj, "weight", where, positive=True)), obj.get("name", ""))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def model_to_dict(m: ModelSpec) -> dict:
    d = {"family": m.family.label, "beta": prior_to_dict(m.prior_beta), "alpha": prior_to_dict(m.prior_alpha)}
    if m.prior_gamma is not None:
        d["gamma"] = prior_to_dict(m.prior_gamma)
    d["weight"] = m.prior_weight
    d["name"] = m.name
    return d


def _family_priors(obj, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object keyed by family")
    out = dict(TABLE1_PRIORS)
    for name, spec in obj.items():
        fam = _family(name, where)
        keys = {"alpha", "gamma"} if fam.has_aux else {"alpha"}
        _check_keys(spec, f"{where}.{name}", keys)
        out[fam] = (_prior(spec["alpha"], f"{where}.{name}.alpha"),
                    _prior(spec["gamma"], f"{where}.{name}.gamma") if fam.has_aux else None)
    return out


def _ensemble(obj, where: str) -> tuple[str, list[ModelSpec]]:
    _check_keys(obj, where, {"kind"}, {"families", "family_priors", "effect_prior"})
    kind = obj["kind"]
    fams = None
    if "families" in obj:
        if not isinstance(obj["families"], list) or not obj["families"]:
            raise ConfigError(f"{where}.families: expected a non-empty list")
        fams = [_family(f, f"{where}.families") for f in obj["families"]]
    priors = _family_priors(obj.get("family_priors", {}), f"{where}.family_priors")
    if kind == "estimation":
        if "effect_prior" in obj:
            raise ConfigError(f"{where}: effect_prior applies to testing ensembles only")
        return kind, estimation_ensemble(fams, priors)
    if kind == "testing":
        eff = _prior(obj["effect_prior"], f"{where}.effect_prior") if "effect_prior" in obj else TESTING_BETA
        return kind, testing_ensemble(fams, priors, eff)
    raise ConfigError(f"{where}.kind: expected 'estimation' or 'testing'")


def _models(obj, where: str) -> list[ModelSpec]:
    if not isinstance(obj, list) or not obj:
        raise ConfigError(f"{where}: expected a non-empty list of models")
    models = [_model(m, f"{where}[{i}]") for i, m in enumerate(obj)]
    total = sum(m.prior_weight for m in models)
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"{where}: model weights sum to {total!r}, not 1")
    return models


def validate_testing(models: list[ModelSpec]) -> None:
    """Every family needs a null (beta spike at 0) and an effect variant."""
    fams = {m.family for m in models}
    for fam in fams:
        null = any(m.family is fam and not m.assumes_effect for m in models)
        eff = any(m.family is fam and m.assumes_effect and not is_spike(m.prior_beta) for m in models)
        if not (null and eff):
            raise ConfigError(f"testing ensemble: family {fam.label} needs both a spike-beta and a free-beta model")


def validate_estimation(models: list[ModelSpec]) -> None:
    for m in models:
        if is_spike(m.prior_beta):
            raise ConfigError(f"estimation ensemble: model {m.name!r} fixes beta")


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class BfdaConfig:
    n_participants: int
    replications: int
    sequential: bool
    censoring: CensoringSpec
    leave_one_family_out: bool
    truncate: bool
    alpha: float
    beta: float
    generating: dict[Hypothesis, tuple[ModelSpec, ...]] | None


@dataclass(frozen=True)
class MapPriorConfig:
    families: tuple[FamilyKind, ...]
    historical: tuple[Path, ...]


@dataclass(frozen=True)
class AnalysisConfig:
    seed: int
    sampler: SamplerSettings
    models: tuple[ModelSpec, ...] | None = None
    ensemble_kind: str | None = None
    thresholds: DecisionThresholds | None = None
    schedule: LookSchedule | None = None
    curve_times: tuple[float, ...] | None = None
    bfda: BfdaConfig | None = None
    simulate: tuple[Hypothesis, int] | None = None
    map_prior: MapPriorConfig | None = None
    outputs: dict[str, str] = field(default_factory=dict)
    base_dir: Path = Path(".")

    def with_seed(self, seed: int) -> "AnalysisConfig":
        from dataclasses import replace
        return replace(self, seed=seed, sampler=self.sampler.with_seed(seed))

    def require(self, *sections: str) -> None:
        for s in sections:
            if getattr(self, s) is None:
                raise ConfigError(f"configuration lacks the {s!r} section")

    def scenarios(self) -> tuple[BfdaScenario, BfdaScenario]:
        from .seeding import derive_seed

        self.require("bfda", "models")
        b = self.bfda
        if b.sequential:
            self.require("schedule")
        out = []
        for k, hyp in enumerate((Hypothesis.H0, Hypothesis.H1)):
            gen = b.generating[hyp] if b.generating else hypothesis_ensemble(self.models, hyp)
            out.append(BfdaScenario(gen, hyp, b.n_participants, b.censoring, b.replications,
                                    self.schedule if b.sequential else None, derive_seed(self.seed, k),
                                    b.leave_one_family_out))
        return out[0], out[1]

    def bfda_analysis(self) -> BfdaAnalysis:
        self.require("bfda", "models")
        return BfdaAnalysis(self.models, self.sampler, self.thresholds,
                            TRUNCATION_RANGE if self.bfda.truncate else None)


_TOP_KEYS = {"seed", "sampler", "models", "ensemble", "thresholds", "schedule", "curves", "bfda", "simulate",
             "map_prior", "outputs"}
_OUTPUT_KEYS = {"trajectory", "replications", "curves", "report"}


def _sampler(obj, where="sampler") -> dict:
    _check_keys(obj, where, set(), {"chains", "burnin", "iterations", "target_acceptance"})
    return {
        "chains": _num(obj, "chains", where, 2, integer=True),
        "burnin_iterations": _num(obj, "burnin", where, 1000, integer=True),
        "sampling_iterations": _num(obj, "iterations", where, 5000, integer=True),
        "adapt_target_acceptance": float(_num(obj, "target_acceptance", where, 0.44)),
    }


def _censoring(obj, where) -> CensoringSpec:
    _check_keys(obj, where, {"shape", "cutoff"}, {"scale", "median"})
    if ("scale" in obj) == ("median" in obj):
        raise ConfigError(f"{where}: give exactly one of 'scale' or 'median'")
    shape = float(_num(obj, "shape", where, positive=True))
    cutoff = _inf_num(obj, "cutoff", where)
    if "median" in obj:
        return CensoringSpec.with_median(_inf_num(obj, "median", where), shape, cutoff)
    return CensoringSpec(shape, _inf_num(obj, "scale", where), cutoff)


def _inf_num(obj, key, where) -> float:
    v = obj[key]
    if v is None:
        return math.inf
    return float(_num(obj, key, where, positive=True))


def _bfda(obj, where="bfda") -> BfdaConfig:
    _check_keys(obj, where, {"n_participants", "replications", "design", "censoring"},
                {"leave_one_family_out", "truncate", "alpha", "beta", "generating"})
    design = obj["design"]
    if design not in ("fixed", "sequential"):
        raise ConfigError(f"{where}.design: expected 'fixed' or 'sequential'")
    gen = None
    if "generating" in obj:
        g = _check_keys(obj["generating"], f"{where}.generating", {"H0", "H1"})
        gen = {Hypothesis.H0: tuple(_models(g["H0"], f"{where}.generating.H0")),
               Hypothesis.H1: tuple(_models(g["H1"], f"{where}.generating.H1"))}
    for flag in ("leave_one_family_out", "truncate"):
        if flag in obj and not isinstance(obj[flag], bool):
            raise ConfigError(f"{where}.{flag}: expected true or false")
    n = _num(obj, "n_participants", where, integer=True, positive=True)
    reps = _num(obj, "replications", where, integer=True)
    if reps < 0:
        raise ConfigError(f"{where}.replications: must be non-negative")
    alpha = float(_num(obj, "alpha", where, 0.05))
    beta = float(_num(obj, "beta", where, 0.10))
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ConfigError(f"{where}: alpha and beta must lie in (0, 1)")
    return BfdaConfig(n, reps, design == "sequential", _censoring(obj["censoring"], f"{where}.censoring"),
                      obj.get("leave_one_family_out", False), obj.get("truncate", True), alpha, beta, gen)


def parse_config(obj: Any, base_dir: Path = Path(".")) -> AnalysisConfig:
    _check_keys(obj, "config", set(), _TOP_KEYS)
    seed = _num(obj, "seed", "config", 0, integer=True)
    if not 0 <= seed < 2**64:
        raise ConfigError("config.seed: must be a non-negative 64-bit integer")
    try:
        sampler = SamplerSettings(seed=seed, **_sampler(obj.get("sampler", {})))
    except ValueError as exc:
        raise ConfigError(f"sampler: {exc}") from None

    if "models" in obj and "ensemble" in obj:
        raise ConfigError("config: give either 'models' or 'ensemble', not both")
    models, kind = None, None
    if "models" in obj:
        models = tuple(_models(obj["models"], "models"))
    elif "ensemble" in obj:
        kind, ms = _ensemble(obj["ensemble"], "ensemble")
        models = tuple(ms)

    thresholds = None
    if "thresholds" in obj:
        t = _check_keys(obj["thresholds"], "thresholds", {"bf10", "bf01"})
        try:
            thresholds = DecisionThresholds(_inf_num(t, "bf10", "thresholds"), _inf_num(t, "bf01", "thresholds"))
        except ValueError as exc:
            raise ConfigError(f"thresholds: {exc}") from None

    schedule = None
    if "schedule" in obj:
        s = _check_keys(obj["schedule"], "schedule", {"horizon"}, {"interval"})
        try:
            schedule = LookSchedule(float(_num(s, "horizon", "schedule", positive=True)),
                                    float(_num(s, "interval", "schedule", 30.0, positive=True)))
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from None

    curve_times = None
    if "curves" in obj:
        c = _check_keys(obj["curves"], "curves", {"times"})
        ts = c["times"]
        if not isinstance(ts, list) or not ts or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in ts):
            raise ConfigError("curves.times: expected a non-empty list of positive numbers")
        curve_times = tuple(float(v) for v in ts)

    bfda = _bfda(obj["bfda"]) if "bfda" in obj else None

    simulate = None
    if "simulate" in obj:
        s = _check_keys(obj["simulate"], "simulate", {"hypothesis"}, {"replication"})
        if s["hypothesis"] not in ("H0", "H1"):
            raise ConfigError("simulate.hypothesis: expected 'H0' or 'H1'")
        simulate = (Hypothesis(s["hypothesis"]), _num(s, "replication", "simulate", 0, integer=True))

    map_prior = None
    if "map_prior" in obj:
        m = _check_keys(obj["map_prior"], "map_prior", set(), {"families", "historical"})
        fams = tuple(_family(f, "map_prior.families") for f in m.get("families", [f.label for f in FamilyKind]))
        hist = m.get("historical", [])
        if not isinstance(hist, list) or not all(isinstance(p, str) for p in hist):
            raise ConfigError("map_prior.historical: expected a list of paths")
        map_prior = MapPriorConfig(fams, tuple(base_dir / p for p in hist))

    outputs = obj.get("outputs", {})
    _check_keys(outputs, "outputs", set(), _OUTPUT_KEYS)
    if not all(isinstance(v, str) for v in outputs.values()):
        raise ConfigError("outputs: paths must be strings")

    cfg = AnalysisConfig(seed, sampler, models, kind, thresholds, schedule, curve_times, bfda, simulate,
                         map_prior, dict(outputs), base_dir)
    if kind == "testing":
        validate_testing(list(models))
    return cfg


def load_config(path: str | os.PathLike) -> AnalysisConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(obj, path.parent)


def _reject_constant(name: str):
    raise ConfigError(f"non-standard JSON constant {name}")
