"""Regenerate src/bootperc/fixtures/grids.json with a naive set-based oracle.

Nothing here imports bootperc: closures, times, floods and double lines are
computed by direct simulation on Python sets.
"""
from __future__ import annotations

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "bootperc" / "fixtures" / "grids.json"


def neighbours(x, y):
    return ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1))


def run(sites, inside):
    """Synchronous 2-neighbour process on the sites accepted by ``inside``;
    returns first-infection times."""
    times = {s: 0 for s in sites}
    infected = set(sites)
    t = 0
    while True:
        new = set()
        for s in {n for q in infected for n in neighbours(*q)}:
            if s in infected or not inside(s):
                continue
            if sum(n in infected for n in neighbours(*s)) >= 2:
                new.add(s)
        if not new:
            return times
        t += 1
        for s in new:
            times[s] = t
        infected |= new


def flood_times(occupied, w, h):
    """Flood of the whole w x h grid: closure of the occupied sites, then the
    process with a permanently infected ring around the grid."""
    closed = set(run(occupied, lambda s: 0 <= s[0] < w and 0 <= s[1] < h))
    ring = {(x, y) for x in range(-1, w + 1) for y in (-1, h)} | \
           {(x, y) for y in range(h) for x in (-1, w)}
    times = run(closed | ring, lambda s: 0 <= s[0] < w and 0 <= s[1] < h)
    return {s: (0 if s in closed else t) for s, t in times.items() if s not in ring}


def longest_double(occupied, w, h):
    best = 0
    for y in range(h - 1):
        run_ = 0
        for x in range(w):
            run_ = run_ + 1 if (x, y) not in occupied and (x, y + 1) not in occupied else 0
            best = max(best, run_)
    for x in range(w - 1):
        run_ = 0
        for y in range(h):
            run_ = run_ + 1 if (x, y) not in occupied and (x + 1, y) not in occupied else 0
            best = max(best, run_)
    return best


def text(sites, w, h):
    return "\n".join("".join("1" if (x, y) in sites else "0" for x in range(w))
                     for y in range(h - 1, -1, -1))


def main():
    rng = random.Random(20240601)
    cases = []
    for k in range(40):
        w, h = rng.randint(1, 24), rng.randint(1, 24)
        p = rng.choice([0.05, 0.1, 0.2, 0.3, 0.5])
        occ = {(x, y) for x in range(w) for y in range(h) if rng.random() < p}
        times = run(occ, lambda s: 0 <= s[0] < w and 0 <= s[1] < h)
        full = len(times) == w * h
        flood = flood_times(occ, w, h)
        cases.append({
            "name": f"grid{k:02d}",
            "grid": text(occ, w, h),
            "closure": text(set(times), w, h),
            "T": max(times.values()) if full else None,
            "double_line": longest_double(occ, w, h),
            "flood": [[flood[(x, y)] for x in range(w)] for y in range(h)],
        })
    OUT.write_text(json.dumps({"generator": "naive set simulation", "cases": cases},
                              sort_keys=True, separators=(",", ":")) + "\n")
    print(f"wrote {len(cases)} cases to {OUT}")


if __name__ == "__main__":
    main()
