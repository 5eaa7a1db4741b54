"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 2070] [--repeat 5]

Times the censored log-likelihood for each family and a full posterior fit
(2 chains x (1000 + 5000) iterations) of a Weibull model, and checks that both
backends return the same numbers.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
import warnings

import numpy as np

from bmasurv import _backend
from bmasurv.ensemble import TABLE1_PRIORS, ESTIMATION_BETA
from bmasurv.families import FamilyKind, SurvivalDataset, sample_time
from bmasurv.priors import ModelSpec
from bmasurv.sampler import SamplerSettings, sample_posterior


def _data(n: int) -> SurvivalDataset:
    rng = np.random.default_rng(2024)
    x = (np.arange(n) >= n // 2).astype(np.int8)
    t = sample_time(FamilyKind.WEIBULL, 8.2 + 0.3 * x, math.exp(-0.07), rng)
    c = np.minimum(1825.0 * rng.random(n) + 365.0, 1825.0)
    return SurvivalDataset(np.minimum(t, c), t <= c, x)


def _best(fn, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2070)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--evals", type=int, default=2000, help="likelihood evaluations per timing")
    args = ap.parse_args(argv)

    if "compiled" not in _backend.available():
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    data = _data(args.n)
    t, ev, x = data.time, data.event.astype(float), data.treatment.astype(float)
    w = np.ones(args.n)

    print(f"n = {args.n}, events = {data.n_events}")
    print(f"{'kernel':<28}{'compiled':>12}{'python':>12}{'speedup':>10}")
    for fam in FamilyKind:
        res, times = {}, {}
        for b in ("compiled", "python"):
            k = _backend.get(b)
            res[b] = k.loglik(int(fam), t, ev, x, w, 8.0, 0.2, 1.2)
            times[b] = _best(lambda: [k.loglik(int(fam), t, ev, x, w, 8.0, 0.2, 1.2) for _ in range(args.evals)],
                             args.repeat) / args.evals
        assert abs(res["compiled"] - res["python"]) < 1e-8 * abs(res["python"]), (fam, res)
        label = f"loglik {fam.label}"
        print(f"{label:<28}{times['compiled'] * 1e6:>10.1f}us{times['python'] * 1e6:>10.1f}us"
              f"{times['python'] / times['compiled']:>9.1f}x")

    alpha, gamma = TABLE1_PRIORS[FamilyKind.WEIBULL]
    model = ModelSpec(FamilyKind.WEIBULL, ESTIMATION_BETA, alpha, gamma)
    settings = SamplerSettings(seed=1)
    fits, times = {}, {}
    for b in ("compiled", "python"):
        _backend.use_backend(b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            t0 = time.perf_counter()
            fits[b] = sample_posterior(model, data, settings)
            times[b] = time.perf_counter() - t0
    _backend.use_backend("compiled")
    same = np.array_equal(fits["compiled"].draws, fits["python"].draws)
    maxdiff = float(np.max(np.abs(fits["compiled"].draws - fits["python"].draws)))
    print(f"{'weibull posterior fit':<28}{times['compiled']:>11.2f}s{times['python']:>11.2f}s"
          f"{times['python'] / times['compiled']:>9.1f}x")
    print(f"draws identical across backends: {same} (max abs difference {maxdiff:.3g})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
