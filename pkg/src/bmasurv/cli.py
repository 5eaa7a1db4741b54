"""Command-line interface: ``bmasurv <subcommand> --config c.json [--data d.csv] ...``.

Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure. Errors are reported on stderr as one line of JSON.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bridge import BridgeSamplingError
from .config import (
    AnalysisConfig,
    ConfigError,
    DataError,
    ingest_csv,
    load_config,
    validate_estimation,
    validate_testing,
    write_csv_text,
)
from .design import (
    CalibrationError,
    Hypothesis,
    _simulate,
    calibrate_fixed,
    calibrate_sequential,
    evaluate_design,
    run_bfda,
)
from .ensemble import EnsembleError, fit_ensemble, fit_model
from .families import DomainError, FamilyKind, SpecificationError
from .meta import map_priors
from .mle import Criterion, fit_mle, select_model
from .priors import prior_to_dict
from .report import atomic_write, curves_csv, dumps, dumps_line, ensemble_report, fit_summary, mle_summary
from .sampler import InitializationError
from .seeding import derive_seed
from .sequential import run_sequential

log = logging.getLogger("bmasurv")

COMMANDS = ("fit", "estimate", "test", "sequential", "bfda", "map-prior", "simulate")
DATA_COMMANDS = {"fit", "estimate", "test", "sequential"}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bmasurv", description="Bayesian model-averaged parametric survival analysis")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    helps = {
        "fit": "fit every configured model separately (plus ML comparators)",
        "estimate": "model-averaged estimation of the treatment effect",
        "test": "model-averaged test for the presence of the treatment effect",
        "sequential": "monitor the inclusion Bayes factor over interim looks",
        "bfda": "Bayes factor design analysis by simulation",
        "map-prior": "meta-analytic predictive priors from historical data",
        "simulate": "write one simulated trial as CSV",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        sp.add_argument("--config", required=True, help="JSON analysis configuration")
        if name == "map-prior":
            sp.add_argument("--data", action="append", default=[], help="historical study CSV (repeatable)")
        elif name in DATA_COMMANDS:
            sp.add_argument("--data", required=True, help="CSV with header time,event,group")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--out", default=None, help="main output path (default: stdout)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
        sp.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


# ---------------------------------------------------------------- outputs


class Outputs:
    def __init__(self, cfg: AnalysisConfig, out: str | None):
        self.main = out or cfg.outputs.get("report")
        self.cfg = cfg

    def secondary(self, key: str, suffix: str) -> Path | None:
        if key in self.cfg.outputs:
            return self.cfg.base_dir / self.cfg.outputs[key]
        if self.main:
            p = Path(self.main)
            return p.with_name(p.stem + suffix)
        return None

    def emit(self, text: str) -> None:
        if self.main:
            atomic_write(self.main, text)
        else:
            sys.stdout.write(text)
            sys.stdout.flush()


# ---------------------------------------------------------------- commands


def _require_models(cfg: AnalysisConfig):
    cfg.require("models")
    return list(cfg.models)


def cmd_fit(cfg, data, args, out: Outputs) -> dict:
    models = _require_models(cfg)
    fits = [fit_model(m, data, cfg.sampler, derive_seed(cfg.seed, i)) for i, m in enumerate(models)]
    rows = []
    for m, f in zip(models, fits):
        row = {"model": m.name, "family": m.family.label, "prior_prob": m.prior_weight}
        row.update(fit_summary(f))
        rows.append(row)
    fams = list(dict.fromkeys(m.family for m in models))
    mles = [fit_mle(f, data, include_treatment=True) for f in fams]
    rep = {"analysis": "fit", "n": len(data), "events": data.n_events, "models": rows,
           "mle": [mle_summary(f) for f in mles]}
    rep["mle_selected"] = {c.value: mles[select_model(mles, c)].family.label for c in Criterion}
    return rep


def _ensemble_cmd(cfg, data, args, out: Outputs, kind: str) -> dict:
    models = _require_models(cfg)
    (validate_estimation if kind == "estimation" else validate_testing)(models)
    result = fit_ensemble(models, data, cfg.sampler, seed=cfg.seed, threads=args.threads)
    rep = {"n": len(data), "events": data.n_events}
    rep.update(ensemble_report(result, kind, cfg.curve_times))
    if kind == "testing" and cfg.thresholds is not None:
        rep["decision"] = cfg.thresholds.decide(result.inclusion_bf_effect).value
    if cfg.curve_times is not None:
        path = out.secondary("curves", ".curves.csv")
        if path is not None:
            atomic_write(path, curves_csv(result, np.array(cfg.curve_times)))
    return rep


def cmd_estimate(cfg, data, args, out):
    return _ensemble_cmd(cfg, data, args, out, "estimation")


def cmd_test(cfg, data, args, out):
    return _ensemble_cmd(cfg, data, args, out, "testing")


def cmd_sequential(cfg, data, args, out: Outputs) -> dict:
    models = _require_models(cfg)
    validate_testing(models)
    cfg.require("schedule")
    from .sequential import NEVER_STOP

    traj = run_sequential(data, models, cfg.schedule, cfg.thresholds or NEVER_STOP, cfg.sampler,
                          seed=cfg.seed, threads=args.threads)
    path = out.secondary("trajectory", ".trajectory.csv")
    if path is not None:
        atomic_write(path, traj.to_csv())
    return {
        "analysis": "sequential",
        "n": len(data),
        "decision": traj.decision.value,
        "decision_time_days": traj.decision_time,
        "looks": [
            {"time_days": t, "bf10": b, "family_probs": {f.label: p for f, p in zip(FamilyKind, row)}}
            for t, b, row in zip(traj.look_times, traj.bf10, traj.posterior_family_probs)
        ],
        "failed_looks": list(traj.failed_looks),
    }


def _rate(x: np.ndarray, mask: np.ndarray) -> dict:
    n = x.size
    if n == 0:
        return {"estimate": None, "se": None, "n": 0}
    p = float(np.count_nonzero(mask)) / n
    return {"estimate": p, "se": math.sqrt(p * (1 - p) / n), "n": n}


def cmd_bfda(cfg, data, args, out: Outputs) -> dict:
    sc0, sc1 = cfg.scenarios()
    res = run_bfda(sc0, sc1, cfg.bfda_analysis(), threads=args.threads)
    path = out.secondary("replications", ".replications.ndjson")
    if path is not None:
        atomic_write(path, "".join(dumps_line(r) + "\n" for r in res.records_h0 + res.records_h1))
    b0, b1 = res.bf10(Hypothesis.H0), res.bf10(Hypothesis.H1)
    rep = {
        "analysis": "bfda",
        "design": "sequential" if cfg.bfda.sequential else "fixed",
        "n_participants": cfg.bfda.n_participants,
        "replications": cfg.bfda.replications,
        "failures": res.failures(),
    }
    if not cfg.bfda.sequential:
        rep["bf10_below_1_under_H0"] = _rate(b0, b0 < 1)
        rep["bf10_above_1_under_H1"] = _rate(b1, b1 > 1)
        rep["misleading_evidence_10"] = {"H0": _rate(b0, b0 >= 10), "H1": _rate(b1, b1 <= 0.1)}
    if b0.size and b1.size:
        try:
            if cfg.bfda.sequential:
                cal = calibrate_sequential(res.trajectories(Hypothesis.H0), res.trajectories(Hypothesis.H1),
                                           cfg.bfda.alpha, cfg.bfda.beta)
            else:
                cal = calibrate_fixed(b0, b1, cfg.bfda.alpha, cfg.bfda.beta)
            rep["calibration"] = {
                "bf10_threshold": cal.bf10_threshold,
                "bf01_threshold": cal.bf01_threshold,
                "false_positive": {"estimate": cal.achieved_false_positive, "se": cal.achieved_false_positive_se},
                "false_negative": {"estimate": cal.achieved_false_negative, "se": cal.achieved_false_negative_se},
            }
        except CalibrationError as exc:
            rep["calibration"] = {"error": str(exc)}
    if cfg.thresholds is not None:
        metrics = {}
        for hyp in Hypothesis:
            dec = res.decisions(hyp)
            if not dec:
                continue
            m = evaluate_design(dec, hyp)
            entry = {
                "error_rate": vars(m.error_rate),
                "correct_rate": vars(m.correct_rate),
                "undecided": vars(m.undecided),
            }
            if cfg.bfda.sequential:
                mt, mm = m.mean_decision_time, m.mean_decision_months()
                entry["mean_decision_time_days"] = vars(mt) if mt else None
                entry["mean_decision_time_months"] = vars(mm) if mm else None
            metrics[hyp.value] = entry
        rep["design_metrics"] = metrics
    return rep


def cmd_map_prior(cfg, data, args, out: Outputs) -> dict:
    cfg.require("map_prior")
    paths = [Path(p) for p in args.data] or list(cfg.map_prior.historical)
    if not paths:
        raise ConfigError("map-prior needs historical datasets (--data or map_prior.historical)")
    historical = [ingest_csv(p) for p in paths]
    res = map_priors(historical, cfg.map_prior.families, cfg.sampler)
    fragment, diag = {}, {}
    for fam, (a, g) in res.items():
        fragment[fam.label] = {"alpha": prior_to_dict(a.predictive)}
        diag[fam.label] = {"alpha": {"pooled_mean": a.pooled_mean, "pooled_se": a.pooled_se, "tau": a.tau}}
        if g is not None:
            fragment[fam.label]["gamma"] = prior_to_dict(g.predictive)
            diag[fam.label]["log_gamma"] = {"pooled_mean": g.pooled_mean, "pooled_se": g.pooled_se, "tau": g.tau}
    return {"family_priors": fragment, "meta_analysis": diag, "studies": len(historical)}


def cmd_simulate(cfg, data, args, out: Outputs) -> str:
    cfg.require("simulate", "bfda")
    hyp, rep = cfg.simulate
    sc0, sc1 = cfg.scenarios()
    sim, _ = _simulate(sc0 if hyp is Hypothesis.H0 else sc1, rep)
    return write_csv_text(sim)


HANDLERS = {
    "fit": cmd_fit,
    "estimate": cmd_estimate,
    "test": cmd_test,
    "sequential": cmd_sequential,
    "bfda": cmd_bfda,
    "map-prior": cmd_map_prior,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------- entry point


def _fail(code: int, kind: str, message: str, **extra) -> int:
    rec = {"error": kind, "message": message, "exit_code": code}
    rec.update(extra)
    sys.stderr.write(dumps_line(rec) + "\n")
    sys.stderr.flush()
    return code


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required", parser.format_usage())
    except UsageError as exc:
        return _fail(EXIT_CONFIG, "usage", str(exc), usage=exc.usage.strip())

    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    if args.threads < 1:
        return _fail(EXIT_CONFIG, "config", "--threads must be at least 1")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be a non-negative 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        data = ingest_csv(args.data) if args.command in DATA_COMMANDS else None
        out = Outputs(cfg, args.out)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = HANDLERS[args.command](cfg, data, args, out)
        for w in caught:
            log.warning("%s: %s", w.category.__name__, w.message)
        if isinstance(result, dict):
            result = {"command": args.command, "seed": cfg.seed, **result}
            if caught:
                result["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
            text = dumps(result)
        else:
            text = result
        out.emit(text)
    except (ConfigError, DataError, SpecificationError, DomainError) as exc:
        return _fail(EXIT_CONFIG, "config" if isinstance(exc, ConfigError) else "validation", str(exc))
    except OSError as exc:
        return _fail(EXIT_CONFIG, "io", str(exc))
    except (BridgeSamplingError, InitializationError, EnsembleError, CalibrationError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "validation", str(exc))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
