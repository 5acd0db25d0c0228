"""Standalone combinatorial and numeric checks.

* counting connected induced subgraphs through a vertex against
  ``(e (d - 1))^k``;
* empirical correlation of increasing and decreasing events on sampled grids;
* a log-domain grid search for the minimum of the function controlling the
  wave-counting sum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Hashable, Mapping

import networkx as nx
import numpy as np

from bootperc._kernels import closure_mask
from bootperc.droplets import CriticalParams
from bootperc.experiments.estimators import gamma_event
from bootperc.experiments.stats import Verdict, experiment_seed
from bootperc.grid import SimParams, sample_mask, stream

# connected induced subgraphs ----------------------------------------------

DEFAULT_ENUM_BUDGET = 5_000_000


class EnumerationBudgetExceeded(RuntimeError):
    pass


def _adjacency(graph) -> dict[Hashable, frozenset]:
    if isinstance(graph, nx.Graph):
        return {u: frozenset(graph.adj[u]) - {u} for u in graph.nodes}
    return {u: frozenset(nbrs) - {u} for u, nbrs in graph.items()}


def count_connected_subgraphs(graph, v: Hashable, k: int,
                              budget: int = DEFAULT_ENUM_BUDGET) -> int:
    """Number of vertex sets of size ``k`` that contain ``v`` and induce a
    connected subgraph.

    Sets are grown one neighbour at a time, level by level, and deduplicated,
    so each set is counted once.  ``budget`` caps the number of sets held at
    any level.
    """
    adj = _adjacency(graph)
    if v not in adj:
        raise KeyError(f"vertex {v!r} not in graph")
    if k <= 0:
        return 0
    level = {frozenset([v])}
    for _ in range(k - 1):
        nxt = set()
        for S in level:
            boundary = set().union(*(adj[u] for u in S)) - S
            for u in boundary:
                nxt.add(S | {u})
                if len(nxt) > budget:
                    raise EnumerationBudgetExceeded(
                        f"more than {budget} connected sets of order <= {k}")
        level = nxt
        if not level:
            return 0
    return len(level)


@dataclass(frozen=True)
class CoffeeResult:
    count: int
    bound: float
    passed: bool
    d: int
    k: int


def coffeetime_check(graph, v: Hashable, k: int, budget: int = DEFAULT_ENUM_BUDGET) -> CoffeeResult:
    adj = _adjacency(graph)
    d = max((len(n) for n in adj.values()), default=0)
    if d < 2:
        raise ValueError(f"maximum degree must be at least 2, got {d}")
    count = count_connected_subgraphs(adj, v, k, budget)
    bound = (math.e * (d - 1)) ** k
    return CoffeeResult(count, bound, count <= bound, d, k)


def graph_corpus(seed: int = 0) -> list[tuple[str, nx.Graph]]:
    """Paths and cycles up to 12 vertices, complete graphs up to 6, grids up
    to 5 x 5 and 50 random graphs of maximum degree at most 5.

    Graphs whose maximum degree is below 2 are skipped, since the bound
    needs ``d >= 2``.
    """
    out = []
    for n in range(3, 13):
        out.append((f"path{n}", nx.path_graph(n)))
        out.append((f"cycle{n}", nx.cycle_graph(n)))
    for n in range(3, 7):
        out.append((f"complete{n}", nx.complete_graph(n)))
    for a in range(1, 6):
        for b in range(a, 6):
            g = nx.grid_2d_graph(a, b)
            if max(dict(g.degree).values(), default=0) >= 2:
                out.append((f"grid{a}x{b}", g))
    rng = np.random.default_rng(seed)
    made = 0
    while made < 50:
        n = int(rng.integers(3, 11))
        g = nx.gnp_random_graph(n, float(rng.uniform(0.2, 0.7)), seed=int(rng.integers(2**31)))
        for u in list(g.nodes):
            while g.degree[u] > 5:
                g.remove_edge(u, next(iter(g.adj[u])))
        if max(dict(g.degree).values()) < 2:
            continue
        out.append((f"random{made}", g))
        made += 1
    return out


@dataclass
class CorpusReport:
    checks: int
    failures: list[tuple[str, Hashable, int, int, float]]

    @property
    def passed(self) -> bool:
        return not self.failures


def coffeetime_corpus(k_max: int = 6, seed: int = 0) -> CorpusReport:
    checks, failures = 0, []
    for name, g in graph_corpus(seed):
        for v in g.nodes:
            for k in range(1, k_max + 1):
                r = coffeetime_check(g, v, k)
                checks += 1
                if not r.passed:
                    failures.append((name, v, k, r.count, r.bound))
    return CorpusReport(checks, failures)


# correlation of monotone events -------------------------------------------

Event = Callable[[np.ndarray], bool]


class NotMonotone(ValueError):
    pass


def spot_check_monotone(event: Event, increasing: bool, n: int, p: float, pairs: int,
                        seed: int) -> None:
    """Evaluate the event on nested pairs ``A`` within ``A'`` and reject it if
    the declared direction is ever violated."""
    for i in range(pairs):
        rng = stream(seed, i)
        u = rng.random((n, n))
        small = u < p
        large = u < min(1.0, p + (1 - p) * rng.random())
        lo, hi = bool(event(small)), bool(event(large))
        if (increasing and lo > hi) or (not increasing and lo < hi):
            kind = "increasing" if increasing else "decreasing"
            raise NotMonotone(f"event declared {kind} fails on nested pair {i}")


@dataclass(frozen=True)
class CorrelationResult:
    name: str
    p_first: float
    p_second: float
    p_joint: float
    covariance: float
    se: float
    expect: str
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _correlation(name: str, x: np.ndarray, y: np.ndarray, expect: str) -> CorrelationResult:
    x = x.astype(float)
    y = y.astype(float)
    N = x.size
    cov = float(np.mean(x * y) - x.mean() * y.mean())
    terms = (x - x.mean()) * (y - y.mean())
    se = float(np.std(terms, ddof=1) / math.sqrt(N)) if N > 1 else math.inf
    if expect == "equal":
        ok = abs(cov) <= 3 * se
    elif expect == "positive":
        ok = cov >= -3 * se
    elif expect == "negative":
        ok = cov <= 3 * se
    else:
        raise ValueError(f"unknown expectation {expect!r}")
    return CorrelationResult(name, float(x.mean()), float(y.mean()), float(np.mean(x * y)), cov,
                             se, expect, ok)


@dataclass
class HarrisReport:
    n: int
    p: float
    trials: int
    seed: int
    results: list[CorrelationResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def harris_check(event_E: Event, event_F: Event, event_G: Event, n: int, p: float, trials: int,
                 seed: int, spot_pairs: int = 200) -> HarrisReport:
    """Estimate cov(E, F) for increasing E, F and cov(E, G) for decreasing G.

    The covariance's standard error is taken from the per-trial products of
    centred indicators; the checks allow three of them.
    """
    s = experiment_seed(seed, f"harris/n={n}/p={p}")
    spot_check_monotone(event_E, True, n, p, spot_pairs, s ^ 1)
    spot_check_monotone(event_F, True, n, p, spot_pairs, s ^ 2)
    spot_check_monotone(event_G, False, n, p, spot_pairs, s ^ 3)
    E = np.empty(trials, bool)
    F = np.empty(trials, bool)
    G = np.empty(trials, bool)
    for i in range(trials):
        A = sample_mask(n, n, SimParams(p, s, i))
        E[i], F[i], G[i] = event_E(A), event_F(A), event_G(A)
    rep = HarrisReport(n, p, trials, s)
    rep.results.append(_correlation("E,F increasing", E, F, "positive"))
    rep.results.append(_correlation("E increasing, G decreasing", E, G, "negative"))
    return rep


def row_count_event(row: int, k: int) -> Event:
    def event(A: np.ndarray) -> bool:
        return int(A[row].sum()) >= k
    return event


def percolates(A: np.ndarray) -> bool:
    return bool(closure_mask(np.ascontiguousarray(A)).all())


def no_critical_event(p: float) -> Event:
    params = CriticalParams(p)

    def event(A: np.ndarray) -> bool:
        return not gamma_event(A, params)
    return event


def default_harris_suite(n: int = 12, p: float = 0.3, trials: int = 20_000,
                         seed: int = 0) -> HarrisReport:
    """Three checks: rows 0 and n-1 (independent), row 0 with at least four
    occupied sites against percolation (both increasing), and percolation
    against the absence of an internally spanned critical droplet."""
    s = experiment_seed(seed, f"harris-suite/n={n}/p={p}")
    row0, top = row_count_event(0, 4), row_count_event(n - 1, 4)
    G = no_critical_event(p)
    spot_check_monotone(row0, True, n, p, 200, s ^ 1)
    spot_check_monotone(percolates, True, n, p, 200, s ^ 2)
    spot_check_monotone(G, False, n, p, 200, s ^ 3)
    r0 = np.empty(trials, bool)
    rt = np.empty(trials, bool)
    perc = np.empty(trials, bool)
    g = np.empty(trials, bool)
    for i in range(trials):
        A = sample_mask(n, n, SimParams(p, s, i))
        r0[i], rt[i], perc[i], g[i] = row0(A), top(A), percolates(A), G(A)
    rep = HarrisReport(n, p, trials, s)
    rep.results.append(_correlation("disjoint rows", r0, rt, "equal"))
    rep.results.append(_correlation("row 0 >= 4 vs percolation", r0, perc, "positive"))
    rep.results.append(_correlation("percolation vs no critical droplet", perc, g, "negative"))
    return rep


# log-domain minimisation ---------------------------------------------------

class ThresholdWarning(UserWarning):
    pass


def calc_f(a, b, c, h: float, p: float, epsilon: float):
    """``(b + 2c) log(1/p) - s log(eps h / s)`` with ``s = a + b + c``; the
    second term is taken as 0 at ``s = 0``."""
    a, b, c = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(c, float))
    s = a + b + c
    safe = np.where(s > 0, s, 1.0)
    tail = np.where(s > 0, s * (math.log(epsilon * h) - np.log(safe)), 0.0)
    return (b + 2 * c) * math.log(1 / p) - tail


@dataclass(frozen=True)
class CalcPoint:
    a: float
    b: float
    c: float
    h: float
    p: float
    epsilon: float
    sigma: float
    gamma: float
    f_value: float


@dataclass(frozen=True)
class CalcResult:
    variant: str
    rhs: float
    resolution: int
    minimum: CalcPoint
    evaluated: int
    passed: bool


def _axis(top: float, n: int) -> np.ndarray:
    if top <= 0:
        return np.zeros(1)
    return np.concatenate([[0.0], np.geomspace(top * 1e-12, top, n - 1)])


def appendix_calc_check(p: float = 1e-16, epsilon: float = 0.05, sigma: float = 36, h: float = 1e6,
                        resolution: int = 200, variant: str = "h", chunk: int = 64) -> CalcResult:
    """Minimise ``calc_f`` over the region ``a + sigma b + gamma c >= rhs``,
    ``c <= h p / gamma``, ``0 <= a, b, c <= h`` with ``rhs`` equal to ``h``
    (variant ``"h"``) or ``h / 2`` (variant ``"h/2"``).

    The lattice is geometric on each axis (plus zero), and the two faces
    ``c = 0`` and ``a + sigma b + gamma c = rhs`` are sampled separately with
    ``a`` solved from the equality.
    """
    if p >= math.exp(-(sigma - 1)):
        warnings.warn(f"p = {p} is not below exp(-(sigma - 1))", ThresholdWarning, stacklevel=2)
    if epsilon > 1:
        warnings.warn(f"epsilon = {epsilon} exceeds 1", ThresholdWarning, stacklevel=2)
    rhs = {"h": h, "h/2": h / 2}[variant]
    gamma = p ** -3.0
    c_max = h * p / gamma
    A = _axis(h, resolution)
    B = _axis(h, resolution)
    C = _axis(min(c_max, h), resolution)
    best = (math.inf, 0.0, 0.0, 0.0)
    evaluated = 0

    def consider(a, b, c):
        nonlocal best, evaluated
        ok = (a + sigma * b + gamma * c >= rhs * (1 - 1e-12)) & (a >= 0)
        evaluated += int(ok.sum())
        if not ok.any():
            return
        f = np.where(ok, calc_f(a, b, c, h, p, epsilon), np.inf)
        i = np.unravel_index(int(np.argmin(f)), f.shape)
        if f[i] < best[0]:
            best = (float(f[i]), float(np.broadcast_to(a, f.shape)[i]),
                    float(np.broadcast_to(b, f.shape)[i]), float(np.broadcast_to(c, f.shape)[i]))

    for start in range(0, B.size, chunk):
        b = B[start:start + chunk]
        consider(A[:, None, None], b[None, :, None], C[None, None, :])
    # c = 0 face with a on the boundary, and the boundary face itself
    bb = np.linspace(0, rhs / sigma, resolution)
    consider(rhs - sigma * bb, bb, np.zeros_like(bb))
    bg, cg = np.meshgrid(B, C, indexing="ij")
    consider(rhs - sigma * bg - gamma * cg, bg, cg)

    f, a, b, c = best
    point = CalcPoint(a, b, c, h, p, epsilon, sigma, gamma, f)
    return CalcResult(variant, rhs, resolution, point, evaluated, f >= -1e-9 * h)
