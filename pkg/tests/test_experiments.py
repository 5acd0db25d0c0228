from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from bootperc.cells import ScaleParams, ScaleWarning
from bootperc.droplets import CriticalParams
from bootperc.experiments.estimators import (BracketError, estimate_cells, estimate_critical_K,
                                             estimate_eta, estimate_theta, eta_bound, gamma_event,
                                             max_component_phi, path_monotone, predicted_time,
                                             recursion_checks, slab_experiment, theta_bound,
                                             time_row, time_scaling_experiment, time_trial,
                                             upright_bound_probe)
from bootperc.experiments.records import TrialRecord
from bootperc.experiments.stats import (EstimateResult, Verdict, experiment_seed, median_ci,
                                        recursion_verdict, wilson)
from bootperc.experiments.trials import (al_trial, closure_trial, containment_trial,
                                         restriction_trial, wave_trial)
from oracles import mask_to_sites, naive_critical


# statistics ----------------------------------------------------------------

@given(st.integers(1, 500), st.data())
def test_wilson_matches_scipy(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson(k, n)
    ref = sps.binomtest(k, n).proportion_ci(0.95, method="wilson")
    assert lo == pytest.approx(ref.low, abs=1e-12) or lo == k / n
    assert hi == pytest.approx(ref.high, abs=1e-12) or hi == k / n
    assert lo <= k / n <= hi


def test_wilson_zero_successes():
    z2 = 1.959963984540054 ** 2
    assert wilson(0, 10) == (0.0, pytest.approx(z2 / (10 + z2)))
    with pytest.raises(ValueError):
        wilson(0, 0)


def test_estimate_result_invariants():
    e = EstimateResult.from_counts(3, 10, 7)
    assert e.ci_low <= e.point == 0.3 <= e.ci_high
    with pytest.raises(ValueError):
        EstimateResult(0.5, 0.6, 0.7, 10, 0, 5)
    with pytest.raises(ValueError):
        EstimateResult(0.5, 0.4, 0.7, 0, 0, 0)


def test_experiment_seed_stable():
    assert experiment_seed(0, "x") == 9937578275230413449
    assert experiment_seed(0, "x") != experiment_seed(1, "x")
    assert experiment_seed(0, "x") != experiment_seed(0, "y")


def test_median_ci_brackets_median():
    x = np.random.default_rng(0).normal(size=301)
    med, lo, hi = median_ci(x)
    assert lo <= med <= hi and med == np.median(x)
    with pytest.raises(ValueError):
        median_ci([])


def test_recursion_verdicts():
    est = EstimateResult.from_counts(10, 1000, 0)
    assert recursion_verdict(est, 0.5, 0.6) is Verdict.PASS
    assert recursion_verdict(est, 1e-4, 2e-4) is Verdict.FAIL
    assert recursion_verdict(est, 0.005, 0.012) is Verdict.INCONCLUSIVE


# records -------------------------------------------------------------------

def test_record_json_round_trip():
    r = TrialRecord("e", 3, 11, 64, 0.3, 7, True, 5, {"a": [1, 2]})
    assert TrialRecord.from_json(r.to_json()) == r
    assert r.to_json() == TrialRecord.from_json(r.to_json()).to_json()


# percolation time ----------------------------------------------------------

def test_predicted_time_example():
    # the quoted 8.746 is a rounding of 8.7451
    assert predicted_time(512, 0.3) == pytest.approx(8.746, abs=1e-3)
    assert predicted_time(512, 0.3) == math.log(512) / (2 * math.log(1 / 0.7))


def test_time_trial_reproducible():
    a = time_trial("t", 64, 0.3, 5, 2)
    b = time_trial("t", 64, 0.3, 5, 2)
    assert a == b and a.T >= a.diagnostics["blocking_bound"]
    full = time_trial("t", 16, 1.0, 5, 0)
    assert full.T == 0 and full.percolated


def test_time_row_handles_no_percolation():
    recs = [TrialRecord("e", i, 0, 8, 0.01, None, False) for i in range(5)]
    row = time_row(8, 0.01, recs)
    assert row.percolated == 0 and not row.in_band


def test_small_scaling_experiment():
    res = time_scaling_experiment([64, 128], [0.3], 40, 0)
    assert [r.n for r in res.rows] == [64, 128]
    assert all(r.percolated == 40 for r in res.rows)
    again = time_scaling_experiment([64, 128], [0.3], 40, 0)
    assert [r.to_json() for r in res.records] == [r.to_json() for r in again.records]


# cells ---------------------------------------------------------------------

def test_eta_theta_extremes():
    params = ScaleParams()
    assert estimate_eta(5, 1.0, 20, params, 0).point == 0
    assert estimate_theta(5, 1.0, 20, params, 0).point == 0
    assert estimate_eta(5, 0.0, 20, params, 0).point == 1
    with pytest.raises(ValueError):
        estimate_cells(2, 0.3, 5, params, 0)


def test_theta_dominates_eta_on_same_samples():
    c = estimate_cells(8, 0.2, 400, ScaleParams(), 3)
    assert c.theta.successes >= c.eta.successes
    for r in c.records:
        assert r.diagnostics["good"] or not r.diagnostics["strongly_good"]


def test_recursion_bounds_and_shape():
    assert eta_bound(0.1, 8, 0.7) == 0.1 ** 4 + 100 * 64 * 0.7 ** 24
    assert theta_bound(0.1, 8, 0.7) == 0.1 ** 4 + 50 * 64 * 0.7 ** 16
    small = estimate_cells(8, 0.35, 300, ScaleParams(), 0)
    large = estimate_cells(16, 0.35, 300, ScaleParams(), 0)
    checks = recursion_checks(small, large)
    assert [c.kind for c in checks] == ["eta", "theta"]
    assert all(c.verdict is not Verdict.FAIL for c in checks)
    with pytest.raises(ValueError):
        recursion_checks(small, small)


# critical size -------------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1),
       st.sampled_from([0.2, 0.3, 0.5]))
def test_gamma_event_matches_naive(w, h, seed, density):
    params = CriticalParams(0.5)  # window [4, 8] covers every block here
    mask = np.random.default_rng(seed).random((h, w)) < density
    lo, hi = params.window
    assert gamma_event(mask, params) == naive_critical(mask_to_sites(mask), w, h, lo, hi)


def test_max_component_phi():
    mask = np.zeros((6, 6), bool)
    assert max_component_phi(mask) == 0
    mask[0, 0] = mask[1, 1] = True
    mask[5, 5] = True
    assert max_component_phi(mask) == 4


def test_path_monotone():
    lo = EstimateResult.from_counts(10, 100, 0)
    hi = EstimateResult.from_counts(90, 100, 0)
    assert path_monotone([(10, lo), (20, hi)])
    assert not path_monotone([(10, hi), (20, lo)])


def test_critical_k_bracket_error_is_reproducible():
    with pytest.raises(BracketError) as first:
        estimate_critical_K(0.15, 200, 0.05, 0)
    with pytest.raises(BracketError) as second:
        estimate_critical_K(0.15, 200, 0.05, 0)
    K0 = math.ceil(CriticalParams(0.15).window[0] / 2)
    assert first.value.bracket == second.value.bracket == (K0 - 1, K0)
    assert [(k, e.point) for k, e in first.value.path] == [(k, e.point) for k, e in second.value.path]


# slabs and corners ---------------------------------------------------------

def test_slab_experiment_deterministic():
    params = ScaleParams()
    a = slab_experiment(0.1, params, 10, 0, 8)
    b = slab_experiment(0.1, params, 10, 0, 8)
    assert a.flood_totals == b.flood_totals and len(a.flood_totals) == 10
    assert a.fast_given_subcritical.trials == 10 and not a.partial


def test_slab_partial_when_rejections_exhausted():
    res = slab_experiment(0.5, ScaleParams(), 5, 0, 8, max_rejections=3)
    assert res.partial and res.rejected == 3 and res.fast_given_subcritical is None


def test_upright_probe_verdicts():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScaleWarning)
        vac = upright_bound_probe(20, 0.4, 50, ScaleParams(), 0)
        assert vac.verdict is Verdict.VACUOUS
        tuned = upright_bound_probe(200, 0.4, 50, ScaleParams(B=1, strict=False), 0)
    assert tuned.t_prime < 200 and tuned.bound < 1 and tuned.verdict is Verdict.PASS
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScaleWarning)
        zero = upright_bound_probe(0, 0.3, 2000, ScaleParams(), 0)
    assert abs(zero.estimate.point - 0.7) < 0.05


# structural trials ---------------------------------------------------------

@pytest.mark.parametrize("fn,args", [
    (closure_trial, ("c", 40)),
    (al_trial, ("a",)),
    (containment_trial, ("f",)),
    (restriction_trial, ("r",)),
])
def test_structural_trials_ok_and_reproducible(fn, args):
    for i in range(20):
        r = fn(*args, 9, i)
        assert r.diagnostics["ok"], r
        assert fn(*args, 9, i) == r


def test_ring_wave_trials_ok():
    for i in range(30):
        assert wave_trial("w", "ring", 4, i).diagnostics["ok"]
