"""Level replication counts and the multilevel estimator.

The estimator spends a time budget K over s levels with counts

    N_k(s, K) = ceil( (K / M^s) * M^((beta+1)/2 * (s-k)) ),   k = 1..s,

which are nonincreasing in k.  For beta = 1 the counts reduce to
N_k = ceil(K * M^-k), independent of s.  The estimate is the sum over levels
of the sample mean of N_k independent level differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .families import LevelFamily
from .params import ParameterSet

# snap near-integer count values before the ceiling so exact ratios such as
# K/M^s = 8 are not pushed up by float noise from pow/log round-trips
_INT_SNAP = 1e-9


def _ceil_snapped(x: float) -> int:
    r = round(x)
    if abs(x - r) <= _INT_SNAP * max(1.0, abs(x)):
        return max(int(r), 1)
    return max(math.ceil(x), 1)


@dataclass(frozen=True)
class ReplicationPlan:
    """Counts [N_1, ..., N_s] for budget K at accuracy s."""

    s: int
    K: float
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != self.s:
            raise ValueError("counts length must equal s")
        if any(c < 1 for c in self.counts):
            raise ValueError("all counts must be >= 1")

    @property
    def total(self) -> int:
        return int(sum(self.counts))


def replication_counts(params: ParameterSet, s: int, K: float) -> ReplicationPlan:
    """Exact ceiling arithmetic for the per-level counts."""
    if s < 1:
        raise ValueError("s must be >= 1")
    if not K > 0:
        raise ValueError("K must be positive")
    M, beta = params.M, params.beta
    base = K / M ** s
    counts = tuple(_ceil_snapped(base * M ** (0.5 * (beta + 1) * (s - k))) for k in range(1, s + 1))
    return ReplicationPlan(s=s, K=float(K), counts=counts)


def counts_array(params: ParameterSet, s: int, K: float) -> np.ndarray:
    """Counts as a float array (driver-facing; same arithmetic as the plan)."""
    return np.asarray(replication_counts(params, s, K).counts, dtype=float)


def estimate(family: LevelFamily, theta, plan: ReplicationPlan,
             rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Evaluate the multilevel estimate Z for one iteration.

    Returns ``(z, samples_drawn)`` where ``samples_drawn`` is the nominal
    number of level-difference simulations, sum(counts).
    """
    z = family.ml_estimate(np.asarray(theta, dtype=float), plan.counts, rng)
    return z, plan.total
