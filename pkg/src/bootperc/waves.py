"""Floods, waves, wave extraction and the (1, sigma, gamma)-restriction.

Floods are computed in the local frame of the droplet: site ``(x, y)`` of a
droplet ``[(a, b), (c, d)]`` is stored at ``[y - b, x - a]``.  Public
functions take and return grid coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import ndimage

from bootperc._kernels import closure_mask, flood_times
from bootperc.droplets import CriticalParams, Droplet, detect_critical
from bootperc.grid import SiteSet
from bootperc.cells import ScaleParams


class WaveError(ValueError):
    pass


class NotSubcritical(ValueError):
    pass


class WaveCounterexample(Exception):
    """No wave with the required height and time exists for this site."""

    def __init__(self, message: str, certificate: dict):
        super().__init__(message)
        self.certificate = certificate


class _NotInCrest(Enum):
    NOT_IN_CREST = "not_in_crest"

    def __repr__(self) -> str:
        return "NOT_IN_CREST"


NOT_IN_CREST = _NotInCrest.NOT_IN_CREST


# floods ------------------------------------------------------------------

@dataclass(frozen=True)
class FloodResult:
    droplet: Droplet
    flood_time: np.ndarray  # local [y - b, x - a]
    total: int

    def time_at(self, x: int, y: int) -> int:
        D = self.droplet
        if not D.contains(x, y):
            raise ValueError(f"{(x, y)} not in {D}")
        return int(self.flood_time[y - D.b, x - D.a])

    def flooded(self, t: int) -> np.ndarray:
        """Local mask of the t-flood."""
        return self.flood_time <= t


def flood_mask(occ: np.ndarray) -> np.ndarray:
    """Flood times of a local ``[y, x]`` occupancy block."""
    occ = np.ascontiguousarray(occ, dtype=np.bool_)
    return flood_times(closure_mask(occ))


def flood(D: Droplet, A: SiteSet) -> FloodResult:
    times = flood_mask(D.crop(A.mask()))
    times.setflags(write=False)
    return FloodResult(D, times, int(times.max()))


@dataclass(frozen=True)
class SiteGeometry:
    x: tuple[int, int]
    droplet: Droplet
    w: int
    h: int

    def in_down_wake(self, y: tuple[int, int]) -> bool:
        return self.droplet.contains(*y) and abs(y[0] - self.x[0]) + y[1] <= self.x[1]

    def in_up_wake(self, y: tuple[int, int]) -> bool:
        return self.droplet.contains(*y) and abs(y[0] - self.x[0]) + self.x[1] <= y[1]

    def in_left_wake(self, y: tuple[int, int]) -> bool:
        return self.droplet.contains(*y) and abs(y[1] - self.x[1]) + y[0] <= self.x[0]

    def in_right_wake(self, y: tuple[int, int]) -> bool:
        return self.droplet.contains(*y) and abs(y[1] - self.x[1]) + self.x[0] <= y[0]

    def wake_masks(self) -> dict[str, np.ndarray]:
        """Local masks of the four wakes."""
        D = self.droplet
        ys, xs = np.mgrid[D.b:D.d + 1, D.a:D.c + 1]
        x1, x2 = self.x
        return {
            "down": np.abs(xs - x1) + ys <= x2,
            "up": np.abs(xs - x1) + x2 <= ys,
            "left": np.abs(ys - x2) + xs <= x1,
            "right": np.abs(ys - x2) + x1 <= xs,
        }


def site_geometry(x: tuple[int, int], D: Droplet) -> SiteGeometry:
    x1, x2 = x
    if not D.contains(x1, x2):
        raise ValueError(f"{x} not in {D}")
    w = min(D.c - x1, x1 - D.a) + 1
    h = min(D.d - x2, x2 - D.b) + 1
    return SiteGeometry((x1, x2), D, w, h)


# waves -------------------------------------------------------------------

@dataclass(frozen=True)
class Wave:
    droplets: tuple[Droplet, ...]

    def __post_init__(self):
        if not self.droplets:
            raise WaveError("a wave needs at least one droplet")
        object.__setattr__(self, "droplets", tuple(self.droplets))

    def __len__(self) -> int:
        return len(self.droplets)

    def to_text(self) -> str:
        return "\n".join(f"D {a} {b} {c} {d}" for a, b, c, d in self.droplets)

    @classmethod
    def from_text(cls, text: str) -> "Wave":
        out = []
        for line in text.strip().splitlines():
            tag, *nums = line.split()
            if tag != "D" or len(nums) != 4:
                raise ValueError(f"bad wave line {line!r}")
            out.append(Droplet(*map(int, nums)))
        return cls(tuple(out))


@dataclass(frozen=True)
class WaveCheck:
    valid: bool
    condition: str | None = None
    index: int | None = None

    def __bool__(self) -> bool:
        return self.valid


def _union_mask(droplets: Sequence[Droplet]):
    a0 = min(D.a for D in droplets) - 1
    b0 = min(D.b for D in droplets) - 1
    c0 = max(D.c for D in droplets) + 1
    d0 = max(D.d for D in droplets) + 1
    mask = np.zeros((d0 - b0 + 1, c0 - a0 + 1), dtype=bool)
    for D in droplets:
        mask[D.b - b0:D.d - b0 + 1, D.a - a0:D.c - a0 + 1] = True
    return mask


def _one_step(mask: np.ndarray) -> np.ndarray:
    m = mask.astype(np.int8)
    n = np.zeros_like(m)
    n[1:] += m[:-1]
    n[:-1] += m[1:]
    n[:, 1:] += m[:, :-1]
    n[:, :-1] += m[:, 1:]
    return mask | (n >= 2)


def separation(D1: Droplet, D2: Droplet) -> int:
    return max(D2.a - D1.c, D1.a - D2.c)


def validate_wave(W: Wave) -> WaveCheck:
    """Check disjointness, closedness and the vertical staircase condition.

    A fourth check, ``separation``, rejects consecutive droplets that
    overlap horizontally (their horizontal distance would not be positive).
    """
    Ds = W.droplets
    for i in range(len(Ds)):
        for j in range(i + 1, len(Ds)):
            if Ds[i].intersects(Ds[j]):
                return WaveCheck(False, "disjoint", i)
    mask = _union_mask(Ds)
    if not np.array_equal(_one_step(mask), mask):
        return WaveCheck(False, "closed", None)
    for i in range(len(Ds) - 1):
        P, Q = Ds[i], Ds[i + 1]
        if not (P.b < Q.b <= P.d + 2 < Q.d + 2):
            return WaveCheck(False, "staircase", i)
    for i in range(len(Ds) - 1):
        if separation(Ds[i], Ds[i + 1]) <= 0:
            return WaveCheck(False, "separation", i)
    return WaveCheck(True)


def wave_time(Ds: Sequence[Droplet]) -> int:
    return sum(separation(Ds[i], Ds[i + 1]) - 1 for i in range(len(Ds) - 1))


@dataclass(frozen=True)
class WaveMetrics:
    height: int
    time: int
    anchor: tuple[int, int]
    is_up: bool
    is_down: bool
    gaps: tuple[int, ...]


def wave_metrics(W: Wave, parent: Droplet) -> WaveMetrics:
    check = validate_wave(W)
    if not check:
        raise WaveError(f"invalid wave: {check.condition} at {check.index}")
    Ds = W.droplets
    gaps = tuple(separation(Ds[i], Ds[i + 1]) for i in range(len(Ds) - 1))
    assert all(g > 0 for g in gaps)
    return WaveMetrics(
        height=Ds[-1].d - Ds[0].b + 1,
        time=sum(g - 1 for g in gaps),
        anchor=(Ds[0].a, Ds[0].b),
        is_up=Ds[0].b == parent.b,
        is_down=Ds[-1].d == parent.d,
        gaps=gaps,
    )


@dataclass(frozen=True)
class CrestTimes:
    upper: int | None
    lower: int | None


def _hdist(x1: int, D: Droplet) -> int:
    if D.a <= x1 <= D.c:
        return 0
    return min(abs(x1 - D.c), abs(D.a - x1))


def in_upper_crest(W: Wave, parent: Droplet, x: tuple[int, int]) -> bool:
    Dk = W.droplets[-1]
    return parent.contains(*x) and Dk.b - 1 <= x[1] <= Dk.d and not Dk.contains(*x)


def in_lower_crest(W: Wave, parent: Droplet, x: tuple[int, int]) -> bool:
    D1 = W.droplets[0]
    return parent.contains(*x) and D1.b <= x[1] <= D1.d + 1 and not D1.contains(*x)


def crest_times(W: Wave, parent: Droplet, x: tuple[int, int]) -> CrestTimes | _NotInCrest:
    t = wave_metrics(W, parent).time
    upper = t + _hdist(x[0], W.droplets[-1]) if in_upper_crest(W, parent, x) else None
    lower = t + _hdist(x[0], W.droplets[0]) if in_lower_crest(W, parent, x) else None
    if upper is None and lower is None:
        return NOT_IN_CREST
    return CrestTimes(upper, lower)


# wave extraction -----------------------------------------------------------

LITERAL = "literal"
RING = "ring"


class _Frame:
    """Components of the 0-flood in a frame where waves climb upwards.

    ``flip`` mirrors the droplet vertically so that down-waves become
    up-waves; droplets are kept in local coordinates.
    """

    def __init__(self, comps: list[Droplet], height: int, flip: bool):
        self.flip = flip
        self.H = height
        if flip:
            comps = [Droplet(D.a, height - 1 - D.d, D.c, height - 1 - D.b) for D in comps]
        self.comps = comps
        self.a = np.array([D.a for D in comps], dtype=np.int64)
        self.b = np.array([D.b for D in comps], dtype=np.int64)
        self.c = np.array([D.c for D in comps], dtype=np.int64)
        self.d = np.array([D.d for D in comps], dtype=np.int64)
        self._best = None

    def site(self, x: tuple[int, int]) -> tuple[int, int]:
        return (x[0], self.H - 1 - x[1]) if self.flip else x

    def anchored(self, i: int, mode: str) -> bool:
        return self.comps[i].b == 0 or (mode == RING and self.comps[i].b == 1)

    def staircase(self, i: int, j: int) -> bool:
        P, Q = self.comps[i], self.comps[j]
        return P.b < Q.b <= P.d + 2 < Q.d + 2

    def time(self, ids: Sequence[int]) -> int:
        return wave_time([self.comps[i] for i in ids])

    def claim(self, ids: Sequence[int], x, t: int, hx: int, mode: str) -> bool:
        """The strengthened induction claim for site x (frame coordinates)."""
        if not ids or not self.anchored(ids[0], mode):
            return False
        if len(set(ids)) != len(ids):
            return False
        for i, j in zip(ids, ids[1:]):
            if not self.staircase(i, j):
                return False
        Dk = self.comps[ids[-1]]
        if not (Dk.b - 1 <= x[1] <= Dk.d) or Dk.contains(*x):
            return False
        if self.time(ids) + _hdist(x[0], Dk) > t:
            return False
        return self.height(ids, mode) >= hx

    def height(self, ids: Sequence[int], mode: str) -> int:
        top = self.comps[ids[-1]].d
        base = 0 if mode == RING else self.comps[ids[0]].b
        return top - base + 1

    def best_chains(self, mode: str):
        """Minimum-time anchored chain ending at each component."""
        if self._best is not None and self._best[0] == mode:
            return self._best[1], self._best[2]
        n = len(self.comps)
        order = np.argsort(self.b, kind="stable")
        best = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        pred = np.full(n, -1, dtype=np.int64)
        inf = np.iinfo(np.int64).max
        for j in order.tolist():
            if self.anchored(j, mode):
                best[j] = 0
            ok = (self.b < self.b[j]) & (self.b[j] <= self.d + 2) & (self.d < self.d[j]) & (best < inf)
            if ok.any():
                sep = np.maximum(self.a[j] - self.c, self.a - self.c[j])
                cand = np.where(ok, best + sep - 1, inf)
                i = int(np.argmin(cand))
                if cand[i] < best[j]:
                    best[j] = cand[i]
                    pred[j] = i
        self._best = (mode, best, pred)
        return best, pred

    def chain(self, j: int, mode: str) -> list[int]:
        _, pred = self.best_chains(mode)
        out = [j]
        while pred[out[-1]] >= 0:
            out.append(int(pred[out[-1]]))
        return out[::-1]


@dataclass(frozen=True)
class WaveExtraction:
    wave: Wave
    orientation: str
    route: str
    flood_time: int
    w: int
    h: int
    metrics: WaveMetrics
    reach: int  # height measured from the edge of D the wave starts at


class _Extractor:
    def __init__(self, D: Droplet, occ: np.ndarray, mode: str):
        if mode not in (LITERAL, RING):
            raise ValueError(f"unknown mode {mode!r}")
        self.D = D
        self.mode = mode
        self.F = flood_mask(occ)
        H, Wd = self.F.shape
        self.H, self.W = H, Wd
        zero = self.F == 0
        labels, _ = ndimage.label(zero)
        comps = []
        for sl in ndimage.find_objects(labels):
            comp = Droplet(sl[1].start, sl[0].start, sl[1].stop - 1, sl[0].stop - 1)
            assert zero[sl].all(), "0-flood component is not a rectangle"
            comps.append(comp)
        self.labels = labels - 1
        self.frames = {"up": _Frame(comps, H, False), "down": _Frame(comps, H, True)}
        self.memo: dict[tuple[int, int], tuple | None] = {}
        self.routes: dict[tuple[int, int], str] = {}
        self.fallbacks = 0

    def w(self, x) -> int:
        return min(self.W - 1 - x[0], x[0]) + 1

    def h(self, x) -> int:
        return min(self.H - 1 - x[1], x[1]) + 1

    def ft(self, x) -> int:
        return int(self.F[x[1], x[0]])

    def inside(self, x) -> bool:
        return 0 <= x[0] < self.W and 0 <= x[1] < self.H

    def comp_at(self, x) -> int | None:
        if not self.inside(x) or self.F[x[1], x[0]] != 0:
            return None
        return int(self.labels[x[1], x[0]])

    def holds(self, rec, x) -> bool:
        orient, ids = rec
        fr = self.frames[orient]
        return fr.claim(ids, fr.site(x), self.ft(x), self.h(x), self.mode)

    def _neighbours(self, x, orient: str):
        # predecessor order: below, left, right, above (in the wave's frame)
        up = (0, 1) if orient == "up" else (0, -1)
        return [(x[0] - up[0], x[1] - up[1]), (x[0] - 1, x[1]), (x[0] + 1, x[1]),
                (x[0] + up[0], x[1] + up[1])]

    def _base(self, x):
        for orient in ("up", "down"):
            fr = self.frames[orient]
            for n in self._neighbours(x, orient):
                i = self.comp_at(n)
                if i is not None and self.holds((orient, (i,)), x):
                    return orient, (i,)
        return None

    def _extend(self, rec, x):
        orient, ids = rec
        fr = self.frames[orient]
        xf = fr.site(x)
        for n in self._neighbours(x, orient)[1:]:
            i = self.comp_at(n)
            if i is None or i in ids:
                continue
            new = fr.comps[i]
            js = [j for j in range(len(ids)) if new.b <= fr.comps[ids[j]].d + 2]
            if not js:
                continue
            j = js[0]
            if j == 0 and fr.anchored(i, self.mode) and new.b <= fr.comps[ids[0]].b:
                cand = (i,)
            else:
                cand = tuple(ids[:j + 1]) + (i,)
            if fr.claim(cand, xf, self.ft(x), self.h(x), self.mode):
                return orient, cand
        return None

    def _dp(self, x):
        t = self.ft(x)
        best_rec = None
        for orient in ("up", "down"):
            fr = self.frames[orient]
            if not fr.comps:
                continue
            best, _ = fr.best_chains(self.mode)
            xf = fr.site(x)
            for j, Dk in enumerate(fr.comps):
                if best[j] == np.iinfo(np.int64).max:
                    continue
                ids = fr.chain(j, self.mode)
                if fr.claim(ids, xf, t, self.h(x), self.mode):
                    key = (best[j] + _hdist(xf[0], Dk), len(ids))
                    if best_rec is None or key < best_rec[0]:
                        best_rec = (key, (orient, tuple(ids)))
        return None if best_rec is None else best_rec[1]

    def record(self, x):
        if x in self.memo:
            return self.memo[x]
        t = self.ft(x)
        rec = None
        if t == 1:
            rec = self._base(x)
        else:
            for y in self._neighbours(x, "up"):
                if not self.inside(y) or self.ft(y) != t - 1 or self.w(y) <= t - 1:
                    continue
                prev = self.record(y)
                if prev is None:
                    continue
                if self.holds(prev, x):
                    rec = prev
                    break
                rec = self._extend(prev, x)
                if rec is not None:
                    break
        route = "replay"
        if rec is None:
            rec = self._dp(x)
            route = "search"
            if rec is not None:
                self.fallbacks += 1
        self.memo[x] = rec
        self.routes[x] = route
        return rec

    def chain_search(self, x):
        """Any anchored up/down wave reaching height h(x) within time t."""
        t = self.ft(x)
        for orient in ("up", "down"):
            fr = self.frames[orient]
            if not fr.comps:
                continue
            best, _ = fr.best_chains(self.mode)
            for j in range(len(fr.comps)):
                if best[j] > t:
                    continue
                ids = fr.chain(j, self.mode)
                if fr.height(ids, self.mode) >= self.h(x):
                    return orient, tuple(ids)
        return None

    def to_wave(self, rec) -> tuple[str, Wave]:
        orient, ids = rec
        comps = self.frames["up"].comps
        Ds = [comps[i] for i in ids]
        if orient == "down":
            Ds = Ds[::-1]
        return orient, Wave(tuple(D.shift(self.D.a, self.D.b) for D in Ds))


def extract_wave_detailed(D: Droplet, A: SiteSet, x: tuple[int, int],
                          mode: str = LITERAL) -> WaveExtraction:
    """Build an up- or down-wave of maximal 0-flood droplets for site ``x``.

    The sites are replayed in order of flood time, each one either reusing
    the wave of a neighbour whose flood time is one less or extending it by
    the maximal droplet next to ``x``.  Where this replay finds nothing, an
    exhaustive search over chains of maximal droplets takes over.

    ``mode="literal"`` demands ``b_1 = b`` (or ``d_k = d``) and
    ``h(W) >= h(x)``.  ``mode="ring"`` lets the first droplet start one row
    off the edge and measures the height from the edge of ``D``.
    """
    if not D.contains(*x):
        raise ValueError(f"{x} not in {D}")
    ex = _Extractor(D, D.crop(A.mask()), mode)
    xl = (x[0] - D.a, x[1] - D.b)
    t, w, h = ex.ft(xl), ex.w(xl), ex.h(xl)
    if not 0 < t < w:
        raise ValueError(f"site {x} has flood time {t}; need 0 < t < w(x) = {w}")
    rec = ex.record(xl)
    route = ex.routes.get(xl, "replay")
    if ex.fallbacks and route == "replay":
        route = "replay+search"
    if rec is None:
        found = ex.chain_search(xl)
        cert = {"droplet": tuple(D), "site": x, "flood_time": t, "w": w, "h": h,
                "mode": mode, "components": [tuple(c.shift(D.a, D.b)) for c in ex.frames["up"].comps]}
        if found is None:
            raise WaveCounterexample(
                f"no {mode} wave of height >= {h} and time <= {t} exists for {x} in {D}", cert)
        rec = found
        route = "chain-search"
    orient, wave = ex.to_wave(rec)
    m = wave_metrics(wave, D)
    check = validate_wave(wave)
    assert check, f"extracted wave invalid: {check}"
    assert m.time <= t, (m, t)
    Ds = wave.droplets
    reach = Ds[-1].d - D.b + 1 if orient == "up" else D.d - Ds[0].b + 1
    if mode == LITERAL:
        assert (m.is_up if orient == "up" else m.is_down), (orient, m)
        assert m.height == reach
    assert reach >= h, (reach, h)
    return WaveExtraction(wave, orient, route, t, w, h, m, reach)


def extract_wave(D: Droplet, A: SiteSet, x: tuple[int, int], mode: str = LITERAL) -> Wave:
    return extract_wave_detailed(D, A, x, mode).wave


def eligible_sites(D: Droplet, A: SiteSet) -> list[tuple[int, int]]:
    F = flood_mask(D.crop(A.mask()))
    H, Wd = F.shape
    xs = np.arange(Wd)
    w = np.minimum(Wd - 1 - xs, xs) + 1
    ok = (F > 0) & (F < w[None, :])
    ys, xs_ = np.nonzero(ok)
    return [(int(x) + D.a, int(y) + D.b) for x, y in zip(xs_, ys)]


# restriction ---------------------------------------------------------------

SINGLE = "SINGLE"
SIGMA_CELL = "SIGMA_CELL"
GAMMA_CELL = "GAMMA_CELL"
_ORIGINAL = "ORIGINAL"


@dataclass(frozen=True)
class RestrictedWave:
    droplets: tuple[Droplet, ...]
    tags: tuple[str, ...]
    origins: tuple[int, ...]
    sigma: int
    gamma: float
    removed: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.droplets)

    def to_text(self) -> str:
        return "\n".join(f"{tag} {a} {b} {c} {d}"
                         for tag, (a, b, c, d) in zip(self.tags, self.droplets))


def restrict_wave(W: Wave, sigma: int, gamma: float, *, removal: str = "literal",
                  index_restricted: bool = False) -> RestrictedWave:
    """Canonicalise a subcritical wave into single sites, sigma-cells and gamma-cells.

    Each replacement cell is anchored at the bottom-left corner of the droplet
    it replaces.  Every other droplet with ``b' >= b`` and ``d' <= d`` is then
    dropped, where ``b`` and ``d`` are the bottom and top rows of the
    replaced droplet (``removal="literal"``) or of the new cell
    (``removal="cell"``).  With ``index_restricted`` only droplets later in
    the sequence are dropped.
    """
    if removal not in ("cell", "literal"):
        raise ValueError(f"unknown removal rule {removal!r}")
    for D in W.droplets:
        if D.phi > gamma:
            raise NotSubcritical(f"{D} has semi-perimeter {D.phi} > gamma = {gamma:.6g}")
    G = math.ceil(gamma)
    seq = [[D, _ORIGINAL, i] for i, D in enumerate(W.droplets)]
    removed: dict[int, int] = {}

    def apply(lo: float, hi: float, side: int, tag: str):
        while True:
            pos = next((k for k, (D, t, _) in enumerate(seq)
                        if t == _ORIGINAL and lo <= D.phi <= hi), None)
            if pos is None:
                return
            D, _, origin = seq[pos]
            cell = Droplet(D.a, D.b, D.a + side - 1, D.b + side - 1)
            top = cell.d if removal == "cell" else D.d
            seq[pos] = [cell, tag, origin]
            keep = []
            for k, entry in enumerate(seq):
                E = entry[0]
                drop = (k != pos and E.b >= cell.b and E.d <= top
                        and (not index_restricted or k > pos))
                if drop:
                    removed[entry[2]] = origin
                else:
                    keep.append(entry)
            seq[:] = keep

    apply(sigma + 2, gamma, G, GAMMA_CELL)
    apply(3, sigma + 1, sigma, SIGMA_CELL)
    for entry in seq:
        if entry[1] == _ORIGINAL:
            assert entry[0].phi == 2, entry
            entry[1] = SINGLE
    return RestrictedWave(tuple(e[0] for e in seq), tuple(e[1] for e in seq),
                          tuple(e[2] for e in seq), sigma, gamma, removed)


@dataclass(frozen=True)
class RestrictedMetrics:
    height: int
    time: int


def restricted_metrics(Wr: RestrictedWave) -> RestrictedMetrics:
    Ds = Wr.droplets
    if not Ds:
        raise WaveError("empty restriction")
    t = 0
    for P, Q in zip(Ds, Ds[1:]):
        t += max(Q.a - P.c, P.a - Q.c, 1) - 1
    return RestrictedMetrics(Ds[-1].d - Ds[0].b + 1, t)


def restriction_audit(W: Wave, Wr: RestrictedWave, A: SiteSet | None = None) -> list[str]:
    """Problems found when checking a restriction against its wave.

    Each surviving original must lie inside its replacement; each tagged
    entry's witness (the original droplet it came from) must have the
    semi-perimeter its tag promises and, given ``A``, be internally
    spanned; the witnesses must be pairwise disjoint.
    """
    from bootperc.droplets import is_internally_spanned

    problems = []
    witnesses = []
    for D, tag, origin in zip(Wr.droplets, Wr.tags, Wr.origins):
        src = W.droplets[origin]
        if not D.contains_droplet(src):
            problems.append(f"{src} not inside its replacement {D}")
        ranges = {SINGLE: (2, 2), SIGMA_CELL: (3, Wr.sigma + 1), GAMMA_CELL: (Wr.sigma + 2, Wr.gamma)}
        lo, hi = ranges[tag]
        if not lo <= src.phi <= hi:
            problems.append(f"{tag} witness {src} has semi-perimeter {src.phi}")
        if tag == SIGMA_CELL and D.width != Wr.sigma:
            problems.append(f"sigma-cell {D} has the wrong side")
        if tag == GAMMA_CELL and D.width != math.ceil(Wr.gamma):
            problems.append(f"gamma-cell {D} has the wrong side")
        if A is not None and not is_internally_spanned(src, A):
            problems.append(f"witness {src} is not internally spanned")
        witnesses.append(src)
    for i in range(len(witnesses)):
        for j in range(i + 1, len(witnesses)):
            if witnesses[i].intersects(witnesses[j]):
                problems.append(f"witnesses {witnesses[i]} and {witnesses[j]} overlap")
    covered = set(Wr.origins) | set(Wr.removed)
    if covered != set(range(len(W))):
        problems.append("some original droplets are neither kept nor removed")
    return problems


# slabs ---------------------------------------------------------------------

@dataclass(frozen=True)
class SlabVerdict:
    subcritical: bool
    fast: bool
    flood_total: int
    threshold: int


def slab_shape(M: float, p: float) -> tuple[int, int]:
    """(long side, short side) of an M-slab."""
    return round(M / p), round(M)


def classify_slab(D: Droplet, A: SiteSet, p: float, params: ScaleParams,
                  criticals: CriticalParams, M: float) -> SlabVerdict:
    lg, sh = slab_shape(M, p)
    if (D.lg, D.sh) != (lg, sh):
        raise ValueError(f"an M-slab for M={M:.4g}, p={p} is {lg}x{sh}, got {D.dims}")
    sub = not detect_critical(D, A, criticals)
    total = flood(D, A).total
    threshold = math.floor(params.c_slow * M / p)
    return SlabVerdict(sub, total <= threshold, total, threshold)
