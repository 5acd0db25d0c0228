from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bootperc.cells import ScaleParams
from bootperc.droplets import CriticalParams, Droplet
from bootperc.experiments.trials import synthetic_wave
from bootperc.grid import GridConfig, SiteSet, evolve
from bootperc.waves import (GAMMA_CELL, NOT_IN_CREST, SIGMA_CELL, SINGLE, NotSubcritical, Wave,
                            WaveCounterexample, WaveError, classify_slab, crest_times,
                            eligible_sites, extract_wave, extract_wave_detailed, flood, flood_mask,
                            restrict_wave, restricted_metrics, restriction_audit, site_geometry,
                            slab_shape, validate_wave, wave_metrics)
from oracles import mask_to_sites, naive_flood, naive_spanned

BIG = Droplet(0, 0, 9, 9)
TWO = Wave((Droplet(0, 0, 1, 1), Droplet(3, 2, 4, 3)))


def boxes(max_side=20, ps=(0.05, 0.1, 0.2, 0.3)):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side), st.integers(0, 2**32 - 1),
                     st.sampled_from(ps)).map(
        lambda t: np.random.default_rng(t[2]).random((t[1], t[0])) < t[3])


# floods --------------------------------------------------------------------

def test_flood_examples():
    c = GridConfig.square(5)
    full = flood(Droplet(1, 1, 3, 3), SiteSet.full(c))
    assert full.total == 0 and not full.flood_time.any()
    f = flood(Droplet(1, 1, 3, 3), SiteSet.empty(c))
    assert f.flood_time.tolist() == [[1, 2, 1], [2, 3, 2], [1, 2, 1]]
    assert f.total == 3 and f.time_at(2, 2) == 3
    with pytest.raises(ValueError):
        f.time_at(0, 0)


def test_empty_square_totals():
    for m in range(1, 13):
        ref = naive_flood(set(), 0, 0, m - 1, m - 1)
        got = flood_mask(np.zeros((m, m), bool))
        assert got.max() == max(ref.values())
        # the oracle gives m for odd m and m - 1 for even m
        assert got.max() == (m if m % 2 else m - 1)


@settings(max_examples=100, deadline=None)
@given(boxes(25))
def test_flood_matches_naive(mask):
    h, w = mask.shape
    got = flood_mask(mask)
    ref = naive_flood(mask_to_sites(mask), 0, 0, w - 1, h - 1)
    for (x, y), t in ref.items():
        assert got[y, x] == t
    assert len(ref) == w * h


@settings(max_examples=60, deadline=None)
@given(boxes(40), st.integers(0, 2**32 - 1))
def test_flood_contains_grid_evolution(mask, seed):
    h, w = mask.shape
    rng = np.random.default_rng(seed)
    a, b = int(rng.integers(0, w)), int(rng.integers(0, h))
    c, d = int(rng.integers(a, w)), int(rng.integers(b, h))
    D, A = Droplet(a, b, c, d), SiteSet.from_mask(mask)
    F = flood(D, A)
    grid_t = D.crop(evolve(A).field.time)
    # a site infected at time t in the grid is in the t-flood
    assert (F.flood_time <= grid_t).all()
    for t in range(F.total):
        assert (F.flooded(t) <= F.flooded(t + 1)).all()


# geometry ------------------------------------------------------------------

def test_site_geometry_examples():
    D = Droplet(0, 0, 4, 4)
    g = site_geometry((2, 2), D)
    assert (g.w, g.h) == (3, 3)
    assert (site_geometry((0, 0), D).w, site_geometry((4, 0), D).h) == (1, 1)
    down = [y for y in D.sites() if g.in_down_wake(y)]
    assert len(down) == 9
    assert int(g.wake_masks()["down"].sum()) == 9
    with pytest.raises(ValueError):
        site_geometry((5, 0), D)


@settings(max_examples=60, deadline=None)
@given(boxes(40, ps=(0.02, 0.05, 0.1, 0.2)))
def test_some_wake_is_flooded(mask):
    F = flood_mask(mask)
    h, w = mask.shape
    D = Droplet(0, 0, w - 1, h - 1)
    for y in range(h):
        for x in range(w):
            t = int(F[y, x])
            if t == 0:
                continue
            wakes = site_geometry((x, y), D).wake_masks()
            flooded = F <= t
            assert any(not (m & ~flooded).any() for m in wakes.values()), (x, y, t)


# waves ---------------------------------------------------------------------

def test_validate_examples():
    assert validate_wave(Wave((Droplet(7, 3, 9, 8),)))
    assert validate_wave(TWO)
    bad = validate_wave(Wave((Droplet(0, 0, 1, 1), Droplet(2, 2, 3, 3))))
    assert not bad and bad.condition == "closed"
    overlap = validate_wave(Wave((Droplet(0, 0, 3, 3), Droplet(2, 2, 5, 5))))
    assert overlap.condition == "disjoint"
    flat = validate_wave(Wave((Droplet(0, 0, 1, 1), Droplet(5, 0, 6, 1))))
    assert flat.condition == "staircase" and flat.index == 0


def test_metrics_examples():
    m = wave_metrics(TWO, BIG)
    assert (m.gaps, m.time, m.height, m.anchor) == ((2,), 1, 4, (0, 0))
    assert m.is_up and not m.is_down
    one = wave_metrics(Wave((Droplet(2, 3, 4, 7),)), BIG)
    assert (one.time, one.height) == (0, 5)
    k = 5
    stack = Wave(tuple(Droplet(2 * i, i, 2 * i, i) for i in range(k)))
    assert validate_wave(stack) and wave_metrics(stack, BIG).time == k - 1
    with pytest.raises(WaveError):
        wave_metrics(Wave((Droplet(0, 0, 1, 1), Droplet(2, 2, 3, 3))), BIG)


def test_crest_examples():
    t = wave_metrics(TWO, BIG).time
    # the upper band runs from the row below D_k to its top row
    assert crest_times(TWO, BIG, (4, 1)).upper == t
    assert crest_times(TWO, BIG, (7, 2)).upper == t + 3
    assert crest_times(TWO, BIG, (4, 4)) is NOT_IN_CREST
    low = crest_times(TWO, BIG, (7, 0))
    assert low.lower == t + 6 and low.upper is None
    high = Wave(tuple(D.shift(0, 4) for D in TWO.droplets))
    assert crest_times(high, BIG, (6, 2)) is NOT_IN_CREST


def test_wave_text_round_trip():
    assert Wave.from_text(TWO.to_text()) == TWO
    assert TWO.to_text().splitlines()[0] == "D 0 0 1 1"
    with pytest.raises(ValueError):
        Wave.from_text("X 1 2 3 4")
    with pytest.raises(WaveError):
        Wave(())


# extraction ----------------------------------------------------------------

def test_extract_single_droplet_example():
    D = Droplet(0, 0, 8, 4)
    A = SiteSet.from_sites(GridConfig(9, 5), [(4, 0)])
    assert eligible_sites(D, A) == [(2, 0), (3, 0), (5, 0), (6, 0)]
    W = extract_wave(D, A, (3, 0))
    assert W.droplets == (Droplet(4, 0, 4, 0),)
    assert wave_metrics(W, D).time == 0


def test_extract_precondition():
    D = Droplet(0, 0, 8, 4)
    A = SiteSet.from_sites(GridConfig(9, 5), [(4, 0)])
    with pytest.raises(ValueError):
        extract_wave(D, A, (4, 2))  # flood time 7 >= w = 5
    with pytest.raises(ValueError):
        extract_wave(D, A, (4, 0))  # flood time 0
    with pytest.raises(ValueError):
        extract_wave(D, A, (9, 0))


def test_literal_counterexample():
    D = Droplet(0, 0, 8, 2)
    A = SiteSet.from_sites(GridConfig(9, 3), [(4, 1)])
    with pytest.raises(WaveCounterexample) as e:
        extract_wave(D, A, (3, 1))
    assert e.value.certificate["flood_time"] == 3 and e.value.certificate["h"] == 2
    ex = extract_wave_detailed(D, A, (3, 1), "ring")
    assert ex.wave.droplets == (Droplet(4, 1, 4, 1),) and ex.reach == 2


@settings(max_examples=80, deadline=None)
@given(boxes(24, ps=(0.05, 0.1, 0.15)), st.data())
def test_extraction_postconditions(mask, data):
    h, w = mask.shape
    D, A = Droplet(0, 0, w - 1, h - 1), SiteSet.from_mask(mask)
    sites = eligible_sites(D, A)
    if not sites:
        return
    x = data.draw(st.sampled_from(sites))
    ring = extract_wave_detailed(D, A, x, "ring")
    assert validate_wave(ring.wave) and ring.metrics.time <= ring.flood_time
    assert ring.reach >= ring.h
    try:
        lit = extract_wave_detailed(D, A, x, "literal")
    except WaveCounterexample:
        return
    m = lit.metrics
    assert validate_wave(lit.wave) and m.height >= lit.h and m.time <= lit.flood_time
    assert m.is_up or m.is_down
    occ = mask_to_sites(mask)
    for Q in lit.wave.droplets:
        assert naive_spanned(Q.a, Q.b, Q.c, Q.d, occ)


# restriction ---------------------------------------------------------------

def test_restrict_examples():
    singles = Wave(tuple(Droplet(2 * i, i, 2 * i, i) for i in range(4)))
    r = restrict_wave(singles, 4, 8)
    assert r.droplets == singles.droplets and set(r.tags) == {SINGLE}
    m, rm = wave_metrics(singles, BIG), restricted_metrics(r)
    assert (rm.height, rm.time) == (m.height, m.time)
    W = Wave((Droplet(0, 0, 0, 0), Droplet(2, 1, 3, 2)))
    r = restrict_wave(W, 4, 8)
    assert r.droplets == (Droplet(0, 0, 0, 0), Droplet(2, 1, 5, 4))
    assert r.tags == (SINGLE, SIGMA_CELL)
    assert r.to_text() == "SINGLE 0 0 0 0\nSIGMA_CELL 2 1 5 4"


def test_gamma_cells_use_ceiling():
    W = Wave((Droplet(0, 0, 3, 3),))
    r = restrict_wave(W, 3, 9.5)
    assert r.tags == (GAMMA_CELL,) and r.droplets[0].dims == (10, 10)
    with pytest.raises(NotSubcritical):
        restrict_wave(W, 3, 7.5)


def test_overlapping_cells_clamp():
    from bootperc.waves import RestrictedWave
    cells = (Droplet(0, 0, 9, 9), Droplet(5, 3, 14, 12))
    rw = RestrictedWave(cells, (GAMMA_CELL, GAMMA_CELL), (0, 1), 3, 10)
    assert restricted_metrics(rw).time == 0
    assert restricted_metrics(rw).height == 13


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 7), st.integers(2, 5),
       st.floats(0, 1))
def test_restriction_height_time_and_audit(seed, k, side, sigma, u):
    W = synthetic_wave(np.random.default_rng(seed), k, side)
    gamma = max(sigma + 2 + u * 10, max(D.phi for D in W.droplets))
    r = restrict_wave(W, sigma, gamma)
    m, rm = wave_metrics(W, Droplet(-1000, 0, 1000, 1000)), restricted_metrics(r)
    assert rm.height >= m.height and rm.time <= m.time
    assert restriction_audit(W, r) == []


# slabs ---------------------------------------------------------------------

def test_slab_examples():
    M, p = 5, 0.25
    lg, sh = slab_shape(M, p)
    assert (lg, sh) == (20, 5)
    D = Droplet(0, 0, lg - 1, sh - 1)
    c = GridConfig(lg, sh)
    params, crit = ScaleParams(), CriticalParams(0.2)
    full = classify_slab(D, SiteSet.full(c), p, params, crit, M)
    assert full.fast and full.flood_total == 0 and full.threshold == 5
    empty = classify_slab(D, SiteSet.empty(c), p, params, crit, M)
    ref = max(naive_flood(set(), 0, 0, lg - 1, sh - 1).values())
    assert empty.subcritical and empty.flood_total == ref
    assert empty.fast == (ref <= 5)
    with pytest.raises(ValueError):
        classify_slab(Droplet(0, 0, 9, 4), SiteSet.empty(c), p, params, crit, M)
