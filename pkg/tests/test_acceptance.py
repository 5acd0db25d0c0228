"""One test per headline criterion, each at its stated size and tolerance.

Every test reports a PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.  Run just this file with
``pytest tests/test_acceptance.py -v``.
"""
from __future__ import annotations

import json
import math
import time
from importlib import resources

import pytest

from bootperc.cells import ScaleParams
from bootperc.cli import run
from bootperc.config import RunConfig
from bootperc.droplets import rectangles_process
from bootperc.experiments.checks import appendix_calc_check, coffeetime_corpus, default_harris_suite
from bootperc.experiments.estimators import (BracketError, estimate_cells, estimate_critical_K,
                                             recursion_checks, time_scaling_experiment)
from bootperc.experiments.stats import Verdict, experiment_seed
from bootperc.experiments.trials import (al_trial, closure_trial, containment_trial,
                                         restriction_trial, wave_trial)
from bootperc.grid import SiteSet

pytestmark = pytest.mark.acceptance

MASTER = 0
MU_CAP = 0.5484


def seed(name: str) -> int:
    return experiment_seed(MASTER, f"acceptance/{name}")


def timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


@pytest.fixture(scope="module")
def closure_records():
    s = seed("closure")
    return timed(lambda: [closure_trial("acceptance/closure", 64, s, i) for i in range(1000)])


@pytest.fixture(scope="module")
def scaling():
    return timed(lambda: time_scaling_experiment([256, 512, 1024], [0.25, 0.3, 0.35], 500, MASTER))


def test_closure_equivalence(criterion, closure_records):
    recs, secs = closure_records
    bad = [r.trial_index for r in recs if not r.diagnostics["closure_equal"]]
    ps = sorted({r.p for r in recs})
    criterion("closure equivalence", not bad and secs < 30 and ps == [0.05, 0.1, 0.2, 0.4],
              f"{len(recs)} grids n<=64, {len(bad)} mismatches, {secs:.1f}s (limit 30s)")


def test_al_witness_scan(criterion):
    s = seed("al")
    recs, secs = timed(lambda: [al_trial("acceptance/al", s, i) for i in range(200)])
    bad = [r.trial_index for r in recs if not r.diagnostics["ok"]]
    scales = sum(r.diagnostics["ks"] for r in recs)
    criterion("witness scan k <= lg <= 2k", not bad and secs < 60,
              f"200 spanned droplets, {scales} scales, {len(bad)} failures, {secs:.1f}s (limit 60s)")


def test_phi_bound_on_every_node(criterion, closure_records):
    recs, _ = closure_records
    bad = [r.trial_index for r in recs if not r.diagnostics["phi_ok"]]
    nodes = sum(r.diagnostics["nodes"] for r in recs)
    cases = json.loads(resources.files("bootperc").joinpath("fixtures/grids.json").read_text())["cases"]
    fixture_bad = 0
    for case in cases:
        mask = SiteSet.from_text(case["grid"]).mask()
        for node in rectangles_process(SiteSet.from_text(case["grid"])).nodes:
            nodes += 1
            fixture_bad += int(node.droplet.crop(mask).sum()) < node.droplet.phi / 2
    criterion("|A ∩ D| >= phi(D)/2 on merge-trace nodes", not bad and not fixture_bad,
              f"{nodes} nodes over {len(recs)} grids and {len(cases)} fixtures, "
              f"{len(bad) + fixture_bad} violations")


def test_blocking_invariant(criterion, scaling):
    res, _ = scaling
    checked = violations = 0
    for r in res.records:
        if r.percolated and r.diagnostics["double_line_interior"]:
            checked += 1
            violations += r.T < r.diagnostics["blocking_bound"]
    criterion("blocking invariant T >= floor((l-1)/2)", violations == 0,
              f"{len(res.records)} trials ({checked} with an interior line), {violations} violations")


def test_time_scaling_band_and_trend(criterion, scaling):
    res, secs = scaling
    out = [r for r in res.rows if not r.in_band]
    trends = [t for t in res.trends if not t.ok]
    ratios = ", ".join(f"n={r.n} p={r.p}: {r.ratio:.3f}" for r in res.rows)
    criterion("time scaling band [0.5, 2] and trend", not out and not trends and secs < 900,
              f"{ratios}; {len(trends)} trend failures, {secs:.0f}s (limit 900s)")


def test_flood_containment(criterion):
    s = seed("containment")
    recs = [containment_trial("acceptance/containment", s, i) for i in range(300)]
    bad = [r.trial_index for r in recs if not r.diagnostics["ok"]]
    criterion("flood containment A_t ∩ D within the t-flood", not bad,
              f"300 (grid, droplet) pairs, {len(bad)} violations")


def test_wave_extraction(criterion):
    # the default (literal) extraction mode
    s = seed("waves")
    recs = [wave_trial("acceptance/waves", "literal", s, i) for i in range(500)]
    bad = [r for r in recs if not r.diagnostics["ok"]]
    first = bad[0].diagnostics if bad else None
    detail = f"500 droplets, {len(bad)} failures"
    if first:
        detail += f" (first: droplet {first['droplet']}, site {first['site']})"
    criterion("wave extraction height >= h(x), time <= flood time", not bad, detail)


def test_restriction(criterion):
    s = seed("restriction")
    recs = [restriction_trial("acceptance/restriction", s, i) for i in range(500)]
    bad = [r.trial_index for r in recs if not r.diagnostics["ok"]]
    criterion("restriction h' >= h, t' <= t and disjoint witnesses", not bad,
              f"500 waves, {len(bad)} failures")


def test_coffeetime(criterion):
    rep, secs = timed(lambda: coffeetime_corpus(6))
    criterion("connected subgraph count <= (e(d-1))^k", rep.passed and secs < 60,
              f"{rep.checks} (graph, vertex, k) checks, {len(rep.failures)} failures, "
              f"{secs:.1f}s (limit 60s)")


def test_eta_theta_recursions(criterion):
    cache = {}

    def cells(m, p):
        if (m, p) not in cache:
            cache[m, p] = estimate_cells(m, p, 10_000, ScaleParams(), seed("cells"))
        return cache[m, p]

    verdicts = []
    for p in (0.3, 0.35, 0.4):
        for m in (8, 16):
            for c in recursion_checks(cells(m, p), cells(2 * m, p)):
                verdicts.append((c.kind, m, p, c.verdict))
    fails = [v for v in verdicts if v[3] is Verdict.FAIL]
    tally = {v.value: sum(x[3] is v for x in verdicts) for v in Verdict}
    criterion("eta/theta recursions", not fails, f"{len(verdicts)} checks at 10^4 trials: {tally}")


def test_harris(criterion):
    rep = default_harris_suite()
    detail = "; ".join(f"{r.name}: cov={r.covariance:+.4f} se={r.se:.4f}" for r in rep.results)
    criterion("Harris correlation checks", rep.passed, detail)


def test_appendix_minimisation(criterion):
    def both():
        return {(v, n): appendix_calc_check(variant=v, resolution=n)
                for v in ("h", "h/2") for n in (200, 400)}

    res, secs = timed(both)
    signs = {v: {res[v, n].minimum.f_value >= 0 for n in (200, 400)} for v in ("h", "h/2")}
    ok = all(r.passed for r in res.values()) and all(len(s) == 1 for s in signs.values()) and secs < 60
    detail = ", ".join(f"{v}@{n}: min f={r.minimum.f_value:.6g}" for (v, n), r in res.items())
    criterion("appendix minimum f >= -1e-9 h", ok, f"{detail}; {secs:.1f}s (limit 60s)")


def test_critical_k_sanity(criterion):
    parts, ok = [], True
    for p in (0.1, 0.12, 0.15):
        try:
            r = estimate_critical_K(p, 2000, 0.05, seed("critical-k"))
        except BracketError as e:
            ok = False
            parts.append(f"p={p}: no estimate ({e}; path {[(k, x.point) for k, x in e.path]})")
            continue
        mu = r.scale.mu_hat
        good = 0 < mu < MU_CAP and r.monotone
        ok = ok and good
        parts.append(f"p={p}: K={r.scale.K_hat:g} mu={mu:.4f} monotone={r.monotone}")
    criterion("critical size mu in (0, 0.5484), monotone path", ok, "; ".join(parts))


def test_verify_determinism(criterion, tmp_path):
    outs = []
    for d in ("a", "b"):
        cfg = RunConfig.from_dict({"command": "verify", "master_seed": MASTER, "out": str(tmp_path / d)})
        code = run(cfg)
        outs.append((code, (tmp_path / d / "records.jsonl").read_bytes()))
    same = outs[0][1] == outs[1][1]
    criterion("verify determinism", same,
              f"exit codes {outs[0][0]}/{outs[1][0]}, {len(outs[0][1])} bytes, identical={same}")


def test_mu_cap_is_lambda_rounded_up():
    assert MU_CAP == math.ceil(math.pi ** 2 / 18 * 1e4) / 1e4
