"""Seeded structural trials: each draws a random instance from ``(seed, i)``,
runs one code path and checks it against an independent one.

Every function returns a :class:`TrialRecord` whose diagnostics carry an
``ok`` flag, so the same functions feed the command line runner and the
acceptance suite.
"""
from __future__ import annotations

import math

import numpy as np

from bootperc._kernels import NEVER, closure_mask, timed_closure
from bootperc.droplets import Droplet, al_scale_scan, is_internally_spanned, rectangles_from_mask
from bootperc.experiments.records import TrialRecord
from bootperc.grid import SiteSet, stream
from bootperc.waves import (Wave, WaveCounterexample, eligible_sites, extract_wave_detailed,
                            flood_mask, restrict_wave, restricted_metrics, restriction_audit,
                            validate_wave, wave_metrics)

CLOSURE_PS = (0.05, 0.1, 0.2, 0.4)


def closure_trial(experiment: str, n_max: int, seed: int, i: int) -> TrialRecord:
    """Rectangles process against the grid closure, plus ``|A ∩ D| >= phi(D)/2``
    on every node of the merge trace."""
    rng = stream(seed, i)
    w, h = (int(v) for v in rng.integers(1, n_max + 1, 2))
    p = CLOSURE_PS[i % len(CLOSURE_PS)]
    occ = rng.random((h, w)) < p
    trace = rectangles_from_mask(occ)
    equal = bool(np.array_equal(trace.union_mask(w, h), closure_mask(occ)))
    counts = np.zeros((h + 1, w + 1), np.int64)
    counts[1:, 1:] = occ.cumsum(0).cumsum(1)
    worst = math.inf
    for node in trace.nodes:
        a, b, c, d = node.droplet
        inside = counts[d + 1, c + 1] - counts[b, c + 1] - counts[d + 1, a] + counts[b, a]
        worst = min(worst, inside - node.droplet.phi / 2)
    phi_ok = bool(worst >= 0) if trace.nodes else True
    return TrialRecord(experiment, i, seed, max(w, h), p, diagnostics={
        "width": w, "height": h, "closure_equal": equal, "phi_ok": phi_ok,
        "nodes": len(trace.nodes), "ok": equal and phi_ok})


def spanned_droplet(seed: int, i: int, n_max: int = 40) -> tuple[Droplet, SiteSet]:
    """A random internally spanned droplet with long side at least 2: the
    largest final droplet of the rectangles process on a random grid."""
    rng = stream(seed, i)
    while True:
        n = int(rng.integers(4, n_max + 1))
        p = float(rng.uniform(0.05, 0.3))
        occ = rng.random((n, n)) < p
        finals = rectangles_from_mask(occ).final_droplets()
        finals = [D for D in finals if D.lg >= 2]
        if finals:
            D = max(finals, key=lambda D: (D.lg, D.phi, tuple(D)))
            return D, SiteSet.from_mask(occ)


def al_trial(experiment: str, seed: int, i: int) -> TrialRecord:
    D, A = spanned_droplet(seed, i)
    spanned = is_internally_spanned(D, A)
    scan = al_scale_scan(D, A)
    ks = [k for k, _ in scan]
    ok = spanned and ks == list(range(1, D.lg // 2 + 1))
    for k, W in scan:
        ok = ok and D.contains_droplet(W) and k <= W.lg <= 2 * k and is_internally_spanned(W, A)
    return TrialRecord(experiment, i, seed, D.lg, None, diagnostics={
        "droplet": list(D), "ks": len(ks), "ok": bool(ok)})


def containment_trial(experiment: str, seed: int, i: int) -> TrialRecord:
    """Inside ``D`` every site's infection time on the whole grid is at least
    its flood time: the grid process never outruns the flood."""
    rng = stream(seed, i)
    n = int(rng.integers(4, 65))
    p = float(rng.choice([0.05, 0.1, 0.2, 0.3]))
    occ = rng.random((n, n)) < p
    a, c = sorted(int(v) for v in rng.integers(0, n, 2))
    b, d = sorted(int(v) for v in rng.integers(0, n, 2))
    D = Droplet(a, b, c, d)
    times, _ = timed_closure(occ, np.iinfo(np.int64).max)
    inside = times[b:d + 1, a:c + 1].astype(np.int64)
    F = flood_mask(np.ascontiguousarray(occ[b:d + 1, a:c + 1])).astype(np.int64)
    infected = inside != NEVER
    ok = bool((inside[infected] >= F[infected]).all())
    return TrialRecord(experiment, i, seed, n, p, diagnostics={"droplet": list(D), "ok": ok})


def wave_instance(seed: int, i: int) -> tuple[Droplet, SiteSet, tuple[int, int]]:
    """A random droplet at low density together with one eligible site."""
    return _wave_instance(stream(seed, i))


def _wave_instance(rng: np.random.Generator) -> tuple[Droplet, SiteSet, tuple[int, int]]:
    while True:
        h = int(rng.integers(3, 61))
        w = int(rng.integers(3, 201))
        p = (0.05, 0.1)[int(rng.integers(2))]
        A = SiteSet.from_mask(rng.random((h, w)) < p)
        D = Droplet(0, 0, w - 1, h - 1)
        el = eligible_sites(D, A)
        if el:
            return D, A, el[int(rng.integers(len(el)))]


def wave_trial(experiment: str, mode: str, seed: int, i: int) -> TrialRecord:
    D, A, x = wave_instance(seed, i)
    diag = {"droplet": list(D), "site": list(x), "mode": mode}
    try:
        ex = extract_wave_detailed(D, A, x, mode)
    except WaveCounterexample as e:
        diag.update(ok=False, counterexample=e.certificate)
        return TrialRecord(experiment, i, seed, D.width, None, diagnostics=diag)
    check = validate_wave(ex.wave)
    m = ex.metrics
    ok = bool(check.valid and ex.reach >= ex.h and m.time <= ex.flood_time)
    diag.update(ok=ok, route=ex.route, height=m.height, reach=ex.reach, h=ex.h, time=m.time,
                flood_time=ex.flood_time, droplets=len(ex.wave))
    return TrialRecord(experiment, i, seed, D.width, None, diagnostics=diag)


def synthetic_wave(rng: np.random.Generator, k: int, maxside: int) -> Wave:
    """A random valid wave of at most ``k`` droplets with sides at most ``maxside``."""
    w, h = (int(v) for v in rng.integers(1, maxside + 1, 2))
    Ds = [Droplet(0, 0, w - 1, h - 1)]
    for _ in range(k - 1):
        P = Ds[-1]
        for _ in range(100):
            w, h = (int(v) for v in rng.integers(1, maxside + 1, 2))
            b = int(rng.integers(P.b + 1, P.d + 3))
            d = b + h - 1
            if d <= P.d:
                continue
            gap = int(rng.integers(2, 6))
            a = P.c + gap if rng.random() < 0.5 else P.a - gap - w + 1
            Q = Droplet(a, b, a + w - 1, d)
            if validate_wave(Wave(tuple(Ds + [Q]))):
                Ds.append(Q)
                break
    return Wave(tuple(Ds))


def restriction_trial(experiment: str, seed: int, i: int) -> TrialRecord:
    """Height does not drop and time does not grow under restriction, and the
    witnesses pass the audit.  Even trials use synthetic waves, odd trials
    waves extracted from random droplets (audited against ``A``)."""
    rng = stream(seed, i)
    sigma = int(rng.integers(2, 6))
    A = None
    while True:
        if i % 2 == 0:
            W = synthetic_wave(rng, int(rng.integers(1, 8)), int(rng.integers(1, 8)))
            parent = Droplet(-1000, 0, 1000, 1000)
        else:
            D, A, x = _wave_instance(rng)
            W = extract_wave_detailed(D, A, x, "ring").wave
            parent = D
        gamma = float(rng.uniform(sigma + 2, 16))
        if all(Q.phi <= gamma for Q in W.droplets):
            break
    m = wave_metrics(W, parent)
    Wr = restrict_wave(W, sigma, gamma)
    rm = restricted_metrics(Wr)
    problems = restriction_audit(W, Wr, A)
    h_ok, t_ok = rm.height >= m.height, rm.time <= m.time
    return TrialRecord(experiment, i, seed, len(W), None, diagnostics={
        "sigma": sigma, "gamma": gamma, "height": [m.height, rm.height], "time": [m.time, rm.time],
        "problems": problems, "ok": bool(h_ok and t_ok and not problems)})
