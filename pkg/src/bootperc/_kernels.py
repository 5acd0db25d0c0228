"""Compiled inner loops shared by the grid and flood code.

The timed closure works layer by layer: a site joins layer ``t`` the moment
its second infected neighbour is seen while scanning layer ``t - 1``.  This
gives exact infection times in time linear in the grid area, independent of
how many steps the process needs.
"""
from __future__ import annotations

import numpy as np
from numba import njit

NEVER = np.iinfo(np.int32).max


@njit(cache=True)
def timed_closure(occ, max_t):
    """Infection times of 2-neighbour bootstrap on a hard-edged grid.

    ``occ`` is a 2-D boolean array indexed ``[y, x]``.  Returns the time
    array (``NEVER`` for sites outside the span) and the last time at which
    any site was added.  Evolution stops early once ``max_t`` is reached.
    """
    h, w = occ.shape
    times = np.full((h, w), NEVER, np.int32)
    cnt = np.zeros((h, w), np.uint8)
    front = np.empty(h * w, np.int64)
    nxt = np.empty(h * w, np.int64)
    nf = 0
    for y in range(h):
        for x in range(w):
            if occ[y, x]:
                times[y, x] = 0
                front[nf] = y * w + x
                nf += 1
    t = 0
    last = 0
    while nf > 0 and t < max_t:
        t += 1
        nn = 0
        for i in range(nf):
            idx = front[i]
            y = idx // w
            x = idx - y * w
            for k in range(4):
                if k == 0:
                    ny, nx = y, x - 1
                elif k == 1:
                    ny, nx = y, x + 1
                elif k == 2:
                    ny, nx = y - 1, x
                else:
                    ny, nx = y + 1, x
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                if times[ny, nx] != NEVER:
                    continue
                cnt[ny, nx] += 1
                if cnt[ny, nx] >= 2:
                    times[ny, nx] = t
                    nxt[nn] = ny * w + nx
                    nn += 1
        if nn > 0:
            last = t
        front, nxt = nxt, front
        nf = nn
    return times, last


@njit(cache=True)
def closure_mask(occ):
    times, _ = timed_closure(occ, np.iinfo(np.int64).max)
    return times != NEVER


@njit(cache=True)
def flood_times(closed):
    """Flood times of a droplet whose span of initial sites is ``closed``.

    The droplet is surrounded by a virtual, fully infected one-site ring.
    The ring is materialised only inside this kernel's scratch array.
    """
    h, w = closed.shape
    pad = np.ones((h + 2, w + 2), np.bool_)
    for y in range(h):
        for x in range(w):
            pad[y + 1, x + 1] = closed[y, x]
    times, _ = timed_closure(pad, np.iinfo(np.int64).max)
    return times[1:h + 1, 1:w + 1].copy()


@njit(cache=True)
def longest_double_runs(occ):
    """Longest empty 2 x L runs: (length, row, start) horizontally, then
    (length, column, start) vertically.  Earlier rows/columns and starts
    win ties."""
    h, w = occ.shape
    hbest, hrow, hstart = 0, -1, -1
    for y in range(h - 1):
        run = 0
        for x in range(w + 1):
            if x < w and not occ[y, x] and not occ[y + 1, x]:
                run += 1
            else:
                if run > hbest:
                    hbest, hrow, hstart = run, y, x - run
                run = 0
    vbest, vcol, vstart = 0, -1, -1
    for x in range(w - 1):
        run = 0
        for y in range(h + 1):
            if y < h and not occ[y, x] and not occ[y, x + 1]:
                run += 1
            else:
                if run > vbest:
                    vbest, vcol, vstart = run, x, y - run
                run = 0
    return hbest, hrow, hstart, vbest, vcol, vstart
