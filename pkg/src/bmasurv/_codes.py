"""Integer codes and the flat target description shared by both kernel backends."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# likelihood kinds; 0-4 follow FamilyKind order
EXPONENTIAL, WEIBULL, LOGNORMAL, LOGLOGISTIC, GAMMA = range(5)
META_NORMAL = 5

# prior kinds
PRIOR_NORMAL, PRIOR_TRUNCNORMAL, PRIOR_LOGNORMAL, PRIOR_CAUCHY, PRIOR_HALFCAUCHY = range(5)

# unconstraining transforms
TRANS_IDENTITY, TRANS_LOWER, TRANS_UPPER, TRANS_INTERVAL = range(4)


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Flat, kernel-ready description of an unnormalized log posterior.

    ``data`` holds four equal-length float arrays. For survival kinds they are
    (log time, event, treatment, weight); for ``META_NORMAL`` they are
    (estimate, se**2, unused, unused). The full parameter vector is
    (beta, alpha, gamma) for survival kinds and (mu, tau) for the meta model;
    ``free_idx`` lists the entries that are sampled, the rest take ``fixed``.
    """

    kind: int
    data: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    fixed: np.ndarray
    free_idx: np.ndarray
    prior_kind: np.ndarray
    prior_par: np.ndarray
    trans_kind: np.ndarray
    trans_par: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.free_idx.shape[0])
