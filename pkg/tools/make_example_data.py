"""Regenerate the synthetic example datasets shipped in bmasurv/data."""
import math
from pathlib import Path

from bmasurv.config import write_csv_text
from bmasurv.design import BfdaScenario, CensoringSpec, Hypothesis, simulate_trial
from bmasurv.families import FamilyKind
from bmasurv.priors import ModelSpec, Spike

OUT = Path(__file__).resolve().parents[1] / "src" / "bmasurv" / "data"


def weibull(beta, alpha, gamma):
    return ModelSpec(FamilyKind.WEIBULL, Spike(beta), Spike(alpha), Spike(gamma), 1.0)


def main():
    trial = BfdaScenario((weibull(0.2, 8.2, math.exp(-0.07)),), Hypothesis.H1, 400,
                         CensoringSpec.with_median(1825, 1.5, 1825), 1, master_seed=11)
    (OUT / "example_trial.csv").write_text(write_csv_text(simulate_trial(trial, 0)))
    # historical single-arm studies for the meta-analytic prior example
    for k, alpha in enumerate((8.0, 8.4, 8.9)):
        hist = BfdaScenario((weibull(0.0, alpha, math.exp(-0.1)),), Hypothesis.H0, 600,
                            CensoringSpec.with_median(1500, 1.5, 2190), 1, master_seed=100 + k)
        d = simulate_trial(hist, 0)
        text = write_csv_text(d).splitlines()
        # single-arm: everyone in the comparator group
        rows = [text[0]] + [",".join(r.split(",")[:2] + ["0"]) for r in text[1:]]
        (OUT / f"historical_{k + 1}.csv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
