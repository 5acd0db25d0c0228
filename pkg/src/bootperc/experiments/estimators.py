"""Monte Carlo estimators built on the grid, droplet, cell and flood code.

Every estimator is a loop over a module-level trial function keyed by
``(seed, trial_index)``, so trials can run in any order or in other
processes and still aggregate to the same result.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage
from scipy import stats as sps

from bootperc._kernels import NEVER, closure_mask, timed_closure
from bootperc.cells import CriticalScale, ScaleParams, classify_mask, derive_scales
from bootperc.droplets import CriticalParams, detect_critical_mask
from bootperc.experiments.records import TrialRecord
from bootperc.experiments.stats import (EstimateResult, Verdict, experiment_seed, median_ci,
                                        recursion_verdict)
from bootperc.grid import (SimParams, SiteSet, blocking_lower_bound, evolve,
                           longest_empty_double_line, sample_mask)
from bootperc.waves import flood_mask



def run_trials(fn: Callable[..., TrialRecord], args: tuple, indices: Iterable[int]) -> list[TrialRecord]:
    return [fn(*args, i) for i in indices]


# percolation time ----------------------------------------------------------

def predicted_time(n: int, p: float) -> float:
    return math.log(n) / (2 * math.log(1 / (1 - p)))


def time_trial(experiment: str, n: int, p: float, seed: int, i: int) -> TrialRecord:
    mask = sample_mask(n, n, SimParams(p, seed, i))
    A = SiteSet.from_mask(mask)
    run = evolve(A, track_times=False)
    percolated = run.closure.is_full()
    line = longest_empty_double_line(A)
    bound = blocking_lower_bound(line.length)
    T = int(run.T) if percolated else None
    if percolated and T < bound:
        raise AssertionError(
            f"blocking invariant broken: T={T} < {bound} for an empty double line of length "
            f"{line.length} (seed={seed}, trial={i})")
    return TrialRecord(experiment, i, seed, n, p, T, percolated, line.length, {
        "blocking_bound": bound,
        "double_line_interior": line.interior,
        "double_line_orientation": line.orientation.value if line.orientation else None,
    })


@dataclass(frozen=True)
class TimeRow:
    n: int
    p: float
    trials: int
    percolated: int
    median_T: float
    median_lo: float
    median_hi: float
    predicted: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    in_band: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TrendCheck:
    p: float
    n_small: int
    n_large: int
    distance_small: tuple[float, float]
    distance_large: tuple[float, float]
    ok: bool


def _distance_from_one(lo: float, hi: float) -> tuple[float, float]:
    if lo <= 1 <= hi:
        return 0.0, max(1 - lo, hi - 1)
    return min(abs(lo - 1), abs(hi - 1)), max(abs(lo - 1), abs(hi - 1))


def time_row(n: int, p: float, records: list[TrialRecord], band=(0.5, 2.0)) -> TimeRow:
    Ts = [r.T for r in records if r.percolated]
    pred = predicted_time(n, p)
    if Ts:
        med, lo, hi = median_ci(Ts)
    else:
        med = lo = hi = math.inf
    ratio = med / pred
    return TimeRow(n, p, len(records), len(Ts), med, lo, hi, pred, ratio, lo / pred, hi / pred,
                   band[0] <= ratio <= band[1])


def trend_check(small: TimeRow, large: TimeRow) -> TrendCheck:
    """The larger grid's ratio must not be significantly farther from 1."""
    ds = _distance_from_one(small.ratio_lo, small.ratio_hi)
    dl = _distance_from_one(large.ratio_lo, large.ratio_hi)
    closer = abs(large.ratio - 1) <= abs(small.ratio - 1)
    ok = closer or dl[0] <= ds[1]
    return TrendCheck(small.p, small.n, large.n, ds, dl, ok)


@dataclass
class TimeScalingResult:
    rows: list[TimeRow]
    trends: list[TrendCheck]
    records: list[TrialRecord] = field(repr=False)


def time_scaling_experiment(n_list, p_list, trials: int, seed: int) -> TimeScalingResult:
    rows, records = [], []
    for p in p_list:
        for n in n_list:
            exp = f"simulate/n={n}/p={p}"
            s = experiment_seed(seed, exp)
            recs = run_trials(time_trial, (exp, n, p, s), range(trials))
            records.extend(recs)
            rows.append(time_row(n, p, recs))
    trends = []
    for p in p_list:
        sub = sorted((r for r in rows if r.p == p), key=lambda r: r.n)
        if len(sub) >= 2:
            trends.append(trend_check(sub[0], sub[-1]))
    return TimeScalingResult(rows, trends, records)


# cells ---------------------------------------------------------------------

def cell_time_bound(params: ScaleParams, m: int, p: float) -> int:
    return m * m + 1 if p <= 0 else params.time_bound(m, p)


def cell_trial(experiment: str, m: int, p: float, B: float, seed: int, i: int) -> TrialRecord:
    mask = sample_mask(m, m, SimParams(p, seed, i))
    t = m * m + 1 if p <= 0 else math.floor(B * m / p)
    cls = classify_mask(mask, t)
    return TrialRecord(experiment, i, seed, m, p, diagnostics={
        "strongly_good": cls.strongly_good, "good": cls.good})


@dataclass(frozen=True)
class CellEstimates:
    m: int
    p: float
    eta: EstimateResult
    theta: EstimateResult
    records: tuple[TrialRecord, ...] = field(repr=False, default=())


def cell_estimates(m: int, p: float, records: list[TrialRecord], seed: int, params: ScaleParams) -> CellEstimates:
    bad = sum(not r.diagnostics["good"] for r in records)
    weak = sum(not r.diagnostics["strongly_good"] for r in records)
    meta = {"m": m, "p": p, "time_bound": cell_time_bound(params, m, p), "params": params.to_dict()}
    n = len(records)
    return CellEstimates(m, p, EstimateResult.from_counts(bad, n, seed, meta),
                         EstimateResult.from_counts(weak, n, seed, meta), tuple(records))


def estimate_cells(m: int, p: float, trials: int, params: ScaleParams, seed: int) -> CellEstimates:
    if m < 3:
        raise ValueError("cells need m >= 3")
    exp = f"cells/m={m}/p={p}"
    s = experiment_seed(seed, exp)
    recs = run_trials(cell_trial, (exp, m, p, params.B, s), range(trials))
    return cell_estimates(m, p, recs, s, params)


def estimate_eta(m: int, p: float, trials: int, params: ScaleParams, seed: int) -> EstimateResult:
    return estimate_cells(m, p, trials, params, seed).eta


def estimate_theta(m: int, p: float, trials: int, params: ScaleParams, seed: int) -> EstimateResult:
    return estimate_cells(m, p, trials, params, seed).theta


def eta_bound(x: float, m: int, q: float) -> float:
    return x ** 4 + 100 * m * m * q ** (4 * m - 8)


def theta_bound(x: float, m: int, q: float) -> float:
    return x ** 4 + 50 * m * m * q ** (2 * m)


@dataclass(frozen=True)
class RecursionCheck:
    kind: str
    m: int
    p: float
    small: EstimateResult
    large: EstimateResult
    bound_low: float
    bound_high: float
    verdict: Verdict

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


def recursion_checks(small: CellEstimates, large: CellEstimates) -> list[RecursionCheck]:
    if large.m != 2 * small.m or large.p != small.p:
        raise ValueError("recursion compares m with 2m at the same p")
    m, q = small.m, 1 - small.p
    out = []
    for kind, bound, s, l in (("eta", eta_bound, small.eta, large.eta),
                              ("theta", theta_bound, small.theta, large.theta)):
        lo, hi = bound(s.ci_low, m, q), bound(s.ci_high, m, q)
        out.append(RecursionCheck(kind, m, small.p, s, l, lo, hi, recursion_verdict(l, lo, hi)))
    return out


# critical size -------------------------------------------------------------

class BracketError(RuntimeError):
    def __init__(self, message: str, bracket: tuple[int, int], path: list):
        super().__init__(message)
        self.bracket = bracket
        self.path = path


def max_component_phi(mask: np.ndarray) -> int:
    closed = closure_mask(np.ascontiguousarray(mask))
    labels, _ = ndimage.label(closed)
    best = 0
    for sl in ndimage.find_objects(labels):
        if sl is not None:
            best = max(best, (sl[0].stop - sl[0].start) + (sl[1].stop - sl[1].start))
    return best


def gamma_event(mask: np.ndarray, params: CriticalParams) -> bool:
    """Whether the block contains an internally spanned droplet in the window.

    While ``phi`` of the whole block is at most ``gamma``, every closure
    component is itself a candidate, and any internally spanned droplet lies
    in some component, so the largest component decides exactly.  Beyond
    that the merge-trace detector is used.
    """
    lo, hi = params.window
    h, w = mask.shape
    if h + w < lo:
        return False
    if h + w <= hi:
        return max_component_phi(mask) >= lo
    return detect_critical_mask(mask, params)


def gamma_trial(experiment: str, K: int, p: float, seed: int, i: int) -> TrialRecord:
    params = CriticalParams(p)
    if 2 * K < params.window[0]:
        hit = False
    else:
        hit = gamma_event(sample_mask(K, K, SimParams(p, seed, i)), params)
    return TrialRecord(experiment, i, seed, K, p, diagnostics={"gamma": hit})


def gamma_probability(K: int, p: float, trials: int, seed: int) -> EstimateResult:
    exp = f"estimate-k/p={p}/K={K}"
    s = experiment_seed(seed, exp)
    if 2 * K < CriticalParams(p).window[0]:
        return EstimateResult.from_counts(0, trials, s, {"K": K, "exact": True})
    recs = run_trials(gamma_trial, (exp, K, p, s), range(trials))
    return EstimateResult.from_counts(sum(r.diagnostics["gamma"] for r in recs), trials, s, {"K": K})


@dataclass
class CriticalKResult:
    scale: CriticalScale
    path: list[tuple[int, EstimateResult]]
    monotone: bool


def path_monotone(path: list[tuple[int, EstimateResult]]) -> bool:
    pts = sorted(path, key=lambda kv: kv[0])
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if pts[i][1].ci_low > pts[j][1].ci_high:
                return False
    return True


def estimate_critical_K(p: float, trials: int, tolerance: float, seed: int,
                        K_max: int | None = None) -> CriticalKResult:
    """Bisect on K for an empirical probability of one half.

    Below ``K0 = ceil(gamma / 4)`` no droplet inside ``[K]^2`` can reach the
    critical window, so the probability there is exactly 0 and the search
    starts at ``K0``.
    """
    params = CriticalParams(p)
    params.check()
    K0 = max(2, math.ceil(params.window[0] / 2))
    K_max = K_max if K_max is not None else min(4 * K0, 2048)
    path: list[tuple[int, EstimateResult]] = []

    def probe(K):
        est = gamma_probability(K, p, trials, seed)
        path.append((K, est))
        return est.point

    def done(K):
        return CriticalKResult(CriticalScale(p, float(K)), path, path_monotone(path))

    v = probe(K0)
    if abs(v - 0.5) <= tolerance:
        return done(K0)
    if v > 0.5:
        raise BracketError(
            f"P(Gamma) jumps from 0 at K={K0 - 1} to {v:.3f} at K={K0}", (K0 - 1, K0), path)
    lo, hi = K0, K_max
    v = probe(hi)
    if abs(v - 0.5) <= tolerance:
        return done(hi)
    if v < 0.5:
        raise BracketError(f"P(Gamma) = {v:.3f} < 1/2 at the budget K_max={K_max}", (lo, hi), path)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        v = probe(mid)
        if abs(v - 0.5) <= tolerance:
            return done(mid)
        if v < 0.5:
            lo = mid
        else:
            hi = mid
    raise BracketError(f"no K in [{lo}, {hi}] within {tolerance} of 1/2", (lo, hi), path)


# slabs ---------------------------------------------------------------------

def slab_trial(experiment: str, p: float, M: float, c_slow: float, seed: int, i: int) -> TrialRecord:
    W, H = round(M / p), round(M)
    mask = sample_mask(W, H, SimParams(p, seed, i))
    crit = CriticalParams(p)
    subcritical = not gamma_event(mask, crit)
    total = int(flood_mask(mask).max())
    threshold = math.floor(c_slow * M / p)
    return TrialRecord(experiment, i, seed, W, p, diagnostics={
        "subcritical": subcritical, "flood_total": total, "fast": total <= threshold,
        "threshold": threshold, "height": H, "M": M})


@dataclass
class SlabResult:
    p: float
    M: float
    fast_given_subcritical: EstimateResult | None
    flood_totals: list[int]
    mean_speed: float
    rejected: int
    partial: bool
    records: list[TrialRecord] = field(repr=False)


def slab_experiment(p: float, params: ScaleParams, trials: int, seed: int, M: float,
                    max_rejections: int = 100_000) -> SlabResult:
    exp = f"slab/p={p}/M={M}"
    s = experiment_seed(seed, exp)
    records, kept, rejected, i = [], [], 0, 0
    while len(kept) < trials and rejected < max_rejections:
        r = slab_trial(exp, p, M, params.c_slow, s, i)
        i += 1
        records.append(r)
        if r.diagnostics["subcritical"]:
            kept.append(r)
        else:
            rejected += 1
    totals = [r.diagnostics["flood_total"] for r in kept]
    est = None
    if kept:
        est = EstimateResult.from_counts(sum(r.diagnostics["fast"] for r in kept), len(kept), s,
                                         {"M": M, "p": p, "shape": [round(M / p), round(M)]})
    speed = float(np.mean(totals) / (M / p)) if totals else math.nan
    return SlabResult(p, M, est, totals, speed, rejected, len(kept) < trials, records)


@dataclass(frozen=True)
class SlabTrend:
    p: float
    M_list: tuple
    mean_totals: tuple
    spearman: float
    pvalue: float


def slab_trend(p: float, M_list, trials: int, params: ScaleParams, seed: int) -> SlabTrend:
    xs, ys, means = [], [], []
    for M in M_list:
        res = slab_experiment(p, params, trials, seed, M)
        xs += [round(M)] * len(res.flood_totals)
        ys += res.flood_totals
        means.append(float(np.mean(res.flood_totals)))
    rho, pval = sps.spearmanr(xs, ys)
    return SlabTrend(p, tuple(M_list), tuple(means), float(rho), float(pval))


# up-right paths ------------------------------------------------------------

def corner_trial(experiment: str, t: int, p: float, seed: int, i: int) -> TrialRecord:
    mask = sample_mask(t + 1, t + 1, SimParams(p, seed, i))
    times, _ = timed_closure(mask, t)
    return TrialRecord(experiment, i, seed, t + 1, p, diagnostics={
        "corner_uninfected": bool(times[0, 0] == NEVER)})


@dataclass(frozen=True)
class UprightReport:
    t: int
    p: float
    t_prime: int
    L: float
    bound: float
    estimate: EstimateResult
    verdict: Verdict


def upright_bound_probe(t: int, p: float, trials: int, params: ScaleParams, seed: int,
                        K_hat: float = 1.0) -> UprightReport:
    """P(corner of [0, t]^2 still uninfected at time t) against 16 q^(t - t') / p."""
    scales = derive_scales(p, max(t + 2, math.ceil(K_hat) + 2), params, K_hat)
    t_prime = math.floor(params.B * scales.L / p)
    q = 1 - p
    bound = math.inf if t_prime > t else 16 * q ** (t - t_prime) / p
    exp = f"upright/t={t}/p={p}"
    s = experiment_seed(seed, exp)
    recs = run_trials(corner_trial, (exp, t, p, s), range(trials))
    est = EstimateResult.from_counts(sum(r.diagnostics["corner_uninfected"] for r in recs), trials, s,
                                     {"scales": scales.to_dict(), "t_prime": t_prime})
    if bound >= 1:
        verdict = Verdict.VACUOUS
    elif est.point <= bound:
        verdict = Verdict.PASS
    elif est.ci_low > bound:
        verdict = Verdict.FAIL
    else:
        verdict = Verdict.INCONCLUSIVE
    return UprightReport(t, p, t_prime, scales.L, bound, est, verdict)
