"""Confidence intervals, verdicts and seed derivation."""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy import stats as sps

Z95 = 1.959963984540054


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"
    VACUOUS = "VACUOUS"


def wilson(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    # keep the point estimate inside the interval despite rounding
    return min(max(centre - half, 0.0), phat), max(min(centre + half, 1.0), phat)


def experiment_seed(master_seed: int, experiment_id: str) -> int:
    """Stable 64-bit seed for one experiment of a run."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    h.update(b"\x00")
    h.update(experiment_id.encode())
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class EstimateResult:
    point: float
    ci_low: float
    ci_high: float
    trials: int
    seed: int
    successes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if not self.ci_low <= self.point <= self.ci_high:
            raise ValueError("point estimate outside its interval")

    @classmethod
    def from_counts(cls, k: int, n: int, seed: int, metadata: dict | None = None) -> "EstimateResult":
        lo, hi = wilson(k, n)
        return cls(k / n, lo, hi, n, seed, k, dict(metadata or {}))

    def to_dict(self) -> dict:
        return asdict(self)


def median_ci(values, level: float = 0.95) -> tuple[float, float, float]:
    """Sample median with a distribution-free interval from order statistics."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("no values")
    alpha = 1 - level
    lo = int(sps.binom.ppf(alpha / 2, n, 0.5))
    hi = int(sps.binom.isf(alpha / 2, n, 0.5))
    lo = max(lo - 1, 0)
    hi = min(hi, n - 1)
    return float(np.median(x)), float(x[lo]), float(x[hi])


def recursion_verdict(next_est: EstimateResult, bound_low: float, bound_high: float) -> Verdict:
    """PASS when even the upper CI of the larger-scale estimate stays below the
    bound evaluated at the lower CI of the smaller scale; FAIL when the lower
    CI exceeds the bound at the upper CI; otherwise INCONCLUSIVE."""
    if next_est.ci_high <= bound_low:
        return Verdict.PASS
    if next_est.ci_low > bound_high:
        return Verdict.FAIL
    return Verdict.INCONCLUSIVE
