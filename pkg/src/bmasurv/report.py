"""JSON report assembly and deterministic serialization.

Floats are written with 17 significant digits; non-finite values use the
``Infinity``/``NaN`` tokens understood by Python's json module.
"""
from __future__ import annotations

import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .ensemble import CurveSummary, EnsembleResult
from .families import FamilyKind
from .mle import MleFit
from .sampler import PosteriorFit


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def _write(obj: Any, out: io.StringIO, indent: int, level: int) -> None:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        out.write(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(_float(float(obj)))
    elif isinstance(obj, str):
        out.write(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{")
        for i, (k, v) in enumerate(obj.items()):
            out.write(("," if i else "") + pad + json.dumps(str(k)) + ": ")
            _write(v, out, indent, level + 1)
        out.write(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.write("[]")
            return
        scalar = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq)
        if scalar:
            out.write("[")
            for i, v in enumerate(seq):
                out.write(", " if i else "")
                _write(v, out, indent, level + 1)
            out.write("]")
            return
        out.write("[")
        for i, v in enumerate(seq):
            out.write(("," if i else "") + pad)
            _write(v, out, indent, level + 1)
        out.write(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    buf = io.StringIO()
    _write(obj, buf, indent, 0)
    buf.write("\n")
    return buf.getvalue()


def dumps_line(obj: Any) -> str:
    """Single-line JSON with the same number formatting."""
    buf = io.StringIO()
    _write_compact(obj, buf)
    return buf.getvalue()


def _write_compact(obj, out):
    if isinstance(obj, dict):
        out.write("{")
        for i, (k, v) in enumerate(obj.items()):
            out.write(("," if i else "") + json.dumps(str(k)) + ":")
            _write_compact(v, out)
        out.write("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.write("[")
        for i, v in enumerate(obj):
            out.write("," if i else "")
            _write_compact(v, out)
        out.write("]")
    else:
        _write(obj, out, 0, 0)


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix="." + path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- sections


def fit_summary(fit: PosteriorFit) -> dict:
    out = {"parameters": fit.summary(), "fixed": dict(fit.fixed_values)}
    out["acceptance"] = dict(fit.acceptance)
    if fit.log_marglik is not None:
        out["log_marglik"] = fit.log_marglik
    if fit.warnings:
        out["warnings"] = list(fit.warnings)
    return out


def model_table(result: EnsembleResult) -> list[dict]:
    rows = []
    for i, (m, fit) in enumerate(result.pairs):
        rows.append({
            "model": m.name,
            "family": m.family.label,
            "prior_prob": float(result.prior_probs[i]),
            "posterior_prob": float(result.posterior_probs[i]),
            "log_marglik": float(result.log_mls[i]),
            "inclusion_bf": float(result.per_model_inclusion_bf[i]),
            "fit": fit_summary(fit),
        })
    return rows


def curve_series(c: CurveSummary) -> dict:
    return {"time": c.times, "mean": c.mean, "lower": c.lower, "upper": c.upper}


def ensemble_report(result: EnsembleResult, kind: str, curve_times=None) -> dict:
    rep: dict[str, Any] = {"analysis": kind, "models": model_table(result)}
    fam = result.family_posterior_probs()
    rep["family_posterior_probs"] = {f.label: fam[f] for f in FamilyKind if any(m.family is f for m in result.models)}
    rep["family_inclusion_bf"] = {f.label: v for f, v in result.per_family_inclusion_bf.items()}
    if kind == "testing":
        bf = result.inclusion_bf_effect
        rep["inclusion_bf_effect"] = bf
        rep["inclusion_bf_null"] = (1.0 / bf) if bf else math.inf
    try:
        rep["beta"] = result.mixture_beta().summary()
    except Exception:  # noqa: BLE001 - no free-beta model
        rep["beta"] = None
    if curve_times is not None:
        rep["curves"] = {
            f"survival_group{g}": curve_series(result.survival(curve_times, g)) for g in (0, 1)
        }
    return rep


def curves_csv(result: EnsembleResult, times) -> str:
    lines = ["time,group,survival,survival_lower,survival_upper,hazard,hazard_lower,hazard_upper"]
    for g in (0, 1):
        s = result.survival(times, g)
        h = result.hazard(times, g)
        for k in range(len(s.times)):
            vals = [s.times[k], g, s.mean[k], s.lower[k], s.upper[k], h.mean[k], h.lower[k], h.upper[k]]
            lines.append(",".join(str(v) if isinstance(v, int) else _float(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def mle_summary(fit: MleFit) -> dict:
    return {
        "family": fit.family.label,
        "beta": fit.estimates.beta,
        "alpha": fit.estimates.alpha,
        "gamma": fit.estimates.gamma,
        "standard_errors": fit.standard_errors,
        "log_lik": fit.log_lik,
        "aic": fit.aic,
        "bic": fit.bic,
        "converged": fit.converged,
    }
