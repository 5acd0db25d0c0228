"""Slow, obviously-correct reference implementations used by the tests.

None of these share code with the package: they work on Python sets of
``(x, y)`` tuples and enumerate where the package is clever.
"""
from __future__ import annotations

import itertools

import networkx as nx


def neighbours(x, y):
    return ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1))


def naive_times(sites, width, height, extra_inside=None):
    """First-infection times of the synchronous 2-neighbour process."""
    inside = extra_inside or (lambda s: 0 <= s[0] < width and 0 <= s[1] < height)
    infected = set(sites)
    times = {s: 0 for s in infected}
    t = 0
    while True:
        new = {s for q in infected for s in neighbours(*q)
               if s not in infected and inside(s)
               and sum(n in infected for n in neighbours(*s)) >= 2}
        if not new:
            return times
        t += 1
        for s in new:
            times[s] = t
        infected |= new


def naive_closure(sites, width, height):
    return set(naive_times(sites, width, height))


def naive_step(sites, width, height):
    out = set(sites)
    for x in range(width):
        for y in range(height):
            if sum(n in sites for n in neighbours(x, y)) >= 2:
                out.add((x, y))
    return out


def mask_to_sites(mask):
    h, w = mask.shape
    return {(x, y) for y in range(h) for x in range(w) if mask[y, x]}


def naive_spanned(a, b, c, d, sites):
    """Closure of the sites inside [a, c] x [b, d], computed in that box only."""
    inner = {(x, y) for (x, y) in sites if a <= x <= c and b <= y <= d}
    closed = naive_times(inner, 0, 0, lambda s: a <= s[0] <= c and b <= s[1] <= d)
    return len(closed) == (c - a + 1) * (d - b + 1)


def naive_flood(sites, a, b, c, d):
    """Flood times inside [a, c] x [b, d]: closure of the sites in the box,
    then growth with a fully infected ring around the box."""
    inside = lambda s: a <= s[0] <= c and b <= s[1] <= d  # noqa: E731
    inner = {s for s in sites if inside(s)}
    closed = set(naive_times(inner, 0, 0, inside))
    ring = {(x, y) for x in range(a - 1, c + 2) for y in (b - 1, d + 1)} | \
           {(x, y) for y in range(b, d + 1) for x in (a - 1, c + 1)}
    times = naive_times(closed | ring, 0, 0, inside)
    return {s: (0 if s in closed else t) for s, t in times.items() if inside(s)}


def naive_longest_double(sites, width, height):
    best = 0
    for L in range(1, max(width, height) + 1):
        for x in range(width):
            for y in range(height):
                horiz = x + L <= width and y + 1 < height and all(
                    (x + i, y + j) not in sites for i in range(L) for j in range(2))
                vert = y + L <= height and x + 1 < width and all(
                    (x + j, y + i) not in sites for i in range(L) for j in range(2))
                if horiz or vert:
                    best = L
    return best


def naive_critical(sites, width, height, lo, hi):
    """Whether some sub-droplet with lo <= phi <= hi is internally spanned."""
    for a in range(width):
        for c in range(a, width):
            for b in range(height):
                for d in range(b, height):
                    phi = (c - a + 1) + (d - b + 1)
                    if lo <= phi <= hi and naive_spanned(a, b, c, d, sites):
                        return True
    return False


def brute_connected_count(graph: nx.Graph, v, k: int) -> int:
    others = [u for u in graph.nodes if u != v]
    count = 0
    for combo in itertools.combinations(others, k - 1):
        if nx.is_connected(graph.subgraph((v, *combo))):
            count += 1
    return count


def brute_upright(blocked, origin, length, width, height):
    """All up-right paths of the given length avoiding ``blocked``, in
    lexicographic order of their site sequences (with up preferred)."""
    out = []

    def walk(path):
        if len(path) == length:
            out.append(list(path))
            return
        x, y = path[-1]
        for nxt in ((x, y + 1), (x + 1, y)):
            if 0 <= nxt[0] < width and 0 <= nxt[1] < height and nxt not in blocked:
                walk(path + [nxt])

    if origin not in blocked:
        walk([origin])
    return out
