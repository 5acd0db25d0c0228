"""Droplets, the rectangles process and critical-droplet detection.

A droplet ``[(a, b), (c, d)]`` is the set of sites ``(x, y)`` with
``a <= x <= c`` and ``b <= y <= d``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from bootperc._kernels import NEVER, closure_mask, timed_closure
from bootperc.grid import SiteSet

LEAF = -1
EXACT_BUDGET = 64
_BUCKET = 8


class NotApplicable(ValueError):
    pass


class WindowEmpty(ValueError):
    """The critical window holds no achievable semi-perimeter."""


class BudgetExceeded(ValueError):
    pass


class NotInternallySpanned(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Droplet:
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if self.a > self.c or self.b > self.d:
            raise ValueError(f"degenerate droplet {tuple(self)}")

    def __iter__(self) -> Iterator[int]:
        return iter((self.a, self.b, self.c, self.d))

    @classmethod
    def square(cls, x: int, y: int, m: int) -> "Droplet":
        return cls(x, y, x + m - 1, y + m - 1)

    @classmethod
    def span(cls, sites: Sequence[tuple[int, int]]) -> "Droplet":
        xs = [s[0] for s in sites]
        ys = [s[1] for s in sites]
        return cls(min(xs), min(ys), max(xs), max(ys))

    @property
    def width(self) -> int:
        return self.c - self.a + 1

    @property
    def height(self) -> int:
        return self.d - self.b + 1

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def lg(self) -> int:
        return max(self.width, self.height)

    @property
    def sh(self) -> int:
        return min(self.width, self.height)

    @property
    def phi(self) -> int:
        return self.width + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def is_square(self) -> bool:
        return self.width == self.height

    def interior(self) -> "Droplet | None":
        if self.width < 3 or self.height < 3:
            return None
        return Droplet(self.a + 1, self.b + 1, self.c - 1, self.d - 1)

    def edges(self) -> dict[str, "Droplet"]:
        a, b, c, d = self
        return {
            "left": Droplet(a, b, a, d),
            "right": Droplet(c, b, c, d),
            "bottom": Droplet(a, b, c, b),
            "top": Droplet(a, d, c, d),
        }

    def buffers(self) -> dict[str, "Droplet"]:
        """The four 2 x (m-2) strips straddling the edges of an m-cell."""
        if not self.is_square or self.width < 3:
            raise NotApplicable(f"buffers need a square cell with m >= 3, got {self.dims}")
        a, b, c, d = self
        return {
            "left": Droplet(a - 1, b + 1, a, d - 1),
            "right": Droplet(c, b + 1, c + 1, d - 1),
            "bottom": Droplet(a + 1, b - 1, c - 1, b),
            "top": Droplet(a + 1, d, c - 1, d + 1),
        }

    def contains(self, x: int, y: int) -> bool:
        return self.a <= x <= self.c and self.b <= y <= self.d

    def contains_droplet(self, other: "Droplet") -> bool:
        return (self.a <= other.a and other.c <= self.c
                and self.b <= other.b and other.d <= self.d)

    def intersects(self, other: "Droplet") -> bool:
        return not (other.c < self.a or self.c < other.a
                    or other.d < self.b or self.d < other.b)

    def gap(self, other: "Droplet") -> int:
        """l1 distance between the closest pair of sites."""
        dx = max(0, other.a - self.c, self.a - other.c)
        dy = max(0, other.b - self.d, self.b - other.d)
        return dx + dy

    def hull(self, other: "Droplet") -> "Droplet":
        return Droplet(min(self.a, other.a), min(self.b, other.b),
                       max(self.c, other.c), max(self.d, other.d))

    def shift(self, dx: int, dy: int) -> "Droplet":
        return Droplet(self.a + dx, self.b + dy, self.c + dx, self.d + dy)

    def sites(self) -> Iterator[tuple[int, int]]:
        for y in range(self.b, self.d + 1):
            for x in range(self.a, self.c + 1):
                yield x, y

    def crop(self, mask: np.ndarray) -> np.ndarray:
        """The part of a ``[y, x]`` mask lying under this droplet."""
        h, w = mask.shape
        if self.a < 0 or self.b < 0 or self.c >= w or self.d >= h:
            raise ValueError(f"{self} does not fit a {w}x{h} grid")
        return mask[self.b:self.d + 1, self.a:self.c + 1]

    def __str__(self) -> str:
        return f"[({self.a},{self.b}),({self.c},{self.d})]"


@dataclass(frozen=True)
class DropletMetrics:
    dims: tuple[int, int]
    lg: int
    sh: int
    phi: int
    interior: Droplet | None
    edges: dict[str, Droplet]
    buffers: dict[str, Droplet] | None


def droplet_metrics(D: Droplet) -> DropletMetrics:
    try:
        buffers = D.buffers()
    except NotApplicable:
        buffers = None
    return DropletMetrics(D.dims, D.lg, D.sh, D.phi, D.interior(), D.edges(), buffers)


@dataclass(frozen=True)
class TraceNode:
    droplet: Droplet
    parents: tuple[int, int] | None

    @property
    def is_leaf(self) -> bool:
        return self.parents is None


@dataclass(frozen=True)
class MergeTrace:
    nodes: tuple[TraceNode, ...]
    finals: tuple[int, ...]

    def final_droplets(self) -> list[Droplet]:
        return [self.nodes[i].droplet for i in self.finals]

    def union_mask(self, width: int, height: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        for D in self.final_droplets():
            out[D.b:D.d + 1, D.a:D.c + 1] = True
        return out

    def max_phi(self) -> int:
        return max((n.droplet.phi for n in self.nodes), default=0)

    def to_text(self) -> str:
        lines = []
        for i, node in enumerate(self.nodes):
            p1, p2 = node.parents if node.parents else (LEAF, LEAF)
            a, b, c, d = node.droplet
            lines.append(f"{i} {a} {b} {c} {d} {p1} {p2}")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "MergeTrace":
        nodes = []
        used = set()
        for i, line in enumerate(text.strip().splitlines()):
            fields = [int(v) for v in line.split()]
            if len(fields) != 7 or fields[0] != i:
                raise ValueError(f"bad trace line {i}: {line!r}")
            _, a, b, c, d, p1, p2 = fields
            parents = None if p1 == LEAF else (p1, p2)
            if parents:
                used.update(parents)
            nodes.append(TraceNode(Droplet(a, b, c, d), parents))
        finals = tuple(i for i in range(len(nodes)) if i not in used)
        return cls(tuple(nodes), finals)


@njit(cache=True)
def _rectangles_kernel(occ, bucket):
    h, w = occ.shape
    n = 0
    for y in range(h):
        for x in range(w):
            if occ[y, x]:
                n += 1
    cap = max(2 * n, 1)
    A = np.empty(cap, np.int64)
    B = np.empty(cap, np.int64)
    C = np.empty(cap, np.int64)
    D = np.empty(cap, np.int64)
    P1 = np.full(cap, -1, np.int64)
    P2 = np.full(cap, -1, np.int64)
    alive = np.zeros(cap, np.bool_)
    nby = (h + bucket - 1) // bucket
    nbx = (w + bucket - 1) // bucket
    head = np.full((nby, nbx), -1, np.int64)
    ent_id = np.empty(16 * cap + 16, np.int64)
    ent_next = np.empty(16 * cap + 16, np.int64)
    n_ent = 0
    heap = [(np.int64(0), np.int64(0))]
    heap.pop()
    k = 0
    for y in range(h):
        for x in range(w):
            if occ[y, x]:
                A[k] = x
                B[k] = y
                C[k] = x
                D[k] = y
                k += 1
    total = k
    for i in range(total):
        alive[i] = True
        by = B[i] // bucket
        bx = A[i] // bucket
        if n_ent == ent_id.size:
            ent_id = np.concatenate((ent_id, np.empty(ent_id.size, np.int64)))
            ent_next = np.concatenate((ent_next, np.empty(ent_next.size, np.int64)))
        ent_id[n_ent] = i
        ent_next[n_ent] = head[by, bx]
        head[by, bx] = n_ent
        n_ent += 1
        heapq.heappush(heap, ((B[i] * w + A[i]) * (h * w) + D[i] * w + C[i], np.int64(i)))
    while len(heap) > 0:
        item = heapq.heappop(heap)
        i = item[1]
        if not alive[i]:
            continue
        a, b, c, d = A[i], B[i], C[i], D[i]
        best = -1
        best_key = np.int64(0)
        y0 = max(b - 2, 0) // bucket
        y1 = min(d + 2, h - 1) // bucket
        x0 = max(a - 2, 0) // bucket
        x1 = min(c + 2, w - 1) // bucket
        for by in range(y0, y1 + 1):
            for bx in range(x0, x1 + 1):
                prev = -1
                e = head[by, bx]
                while e != -1:
                    j = ent_id[e]
                    nxt = ent_next[e]
                    if not alive[j]:
                        if prev == -1:
                            head[by, bx] = nxt
                        else:
                            ent_next[prev] = nxt
                        e = nxt
                        continue
                    prev = e
                    e = nxt
                    if j == i:
                        continue
                    dx = max(0, A[j] - c, a - C[j])
                    dy = max(0, B[j] - d, b - D[j])
                    if dx + dy > 2:
                        continue
                    key = (B[j] * w + A[j]) * (h * w) + D[j] * w + C[j]
                    if best == -1 or key < best_key:
                        best = j
                        best_key = key
        if best == -1:
            continue
        j = best
        alive[i] = False
        alive[j] = False
        m = total
        total += 1
        A[m] = min(a, A[j])
        B[m] = min(b, B[j])
        C[m] = max(c, C[j])
        D[m] = max(d, D[j])
        key_i = (b * w + a) * (h * w) + d * w + c
        if key_i <= best_key:
            P1[m] = i
            P2[m] = j
        else:
            P1[m] = j
            P2[m] = i
        alive[m] = True
        for by in range(B[m] // bucket, D[m] // bucket + 1):
            for bx in range(A[m] // bucket, C[m] // bucket + 1):
                if n_ent == ent_id.size:
                    ent_id = np.concatenate((ent_id, np.empty(ent_id.size, np.int64)))
                    ent_next = np.concatenate((ent_next, np.empty(ent_next.size, np.int64)))
                ent_id[n_ent] = m
                ent_next[n_ent] = head[by, bx]
                head[by, bx] = n_ent
                n_ent += 1
        heapq.heappush(heap, ((B[m] * w + A[m]) * (h * w) + D[m] * w + C[m], m))
    return A[:total], B[:total], C[:total], D[:total], P1[:total], P2[:total], alive[:total]


def rectangles_from_mask(mask: np.ndarray, offset: tuple[int, int] = (0, 0)) -> MergeTrace:
    """Run the rectangles process on the occupied sites of a ``[y, x]`` mask.

    Leaves are the occupied sites in row-major order.  The process pops the
    unsettled droplet with the smallest ``(b, a)`` and merges it with its own
    smallest partner within l1 distance 2; a droplet without partners is
    settled until a new droplet appears next to it.
    """
    ox, oy = offset
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    h, w = mask.shape
    if h * w * h * w >= 2 ** 62:
        raise ValueError("grid too large for the merge kernel")
    A, B, C, D, P1, P2, alive = _rectangles_kernel(mask, _BUCKET)
    nodes = tuple(
        TraceNode(Droplet(a + ox, b + oy, c + ox, d + oy), None if p1 < 0 else (p1, p2))
        for a, b, c, d, p1, p2 in zip(A.tolist(), B.tolist(), C.tolist(), D.tolist(),
                                      P1.tolist(), P2.tolist()))
    finals = [i for i in np.flatnonzero(alive).tolist()]
    finals.sort(key=lambda i: (B[i], A[i]))
    return MergeTrace(nodes, tuple(finals))


def rectangles_process(A: SiteSet, region: Droplet | None = None) -> MergeTrace:
    """Merge trace of the rectangles process on ``A``, or on ``A`` restricted
    to ``region`` (coordinates stay those of the full grid)."""
    mask = A.mask()
    if region is None:
        return rectangles_from_mask(mask)
    return rectangles_from_mask(region.crop(mask), (region.a, region.b))


def is_internally_spanned(D: Droplet, A: SiteSet) -> bool:
    return bool(closure_mask(np.ascontiguousarray(D.crop(A.mask()))).all())


def is_spanned_by_time(D: Droplet, A: SiteSet, t: int) -> bool:
    if t < 0:
        raise ValueError("t must be nonnegative")
    times, _ = timed_closure(np.ascontiguousarray(D.crop(A.mask())), t)
    return bool((times != NEVER).all())


@dataclass(frozen=True)
class CriticalParams:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"critical window needs 0 < p <= 1, got {self.p}")

    @property
    def gamma(self) -> float:
        return self.p ** -3.0

    @property
    def window(self) -> tuple[float, float]:
        return self.gamma / 2.0, self.gamma

    def in_window(self, phi: int) -> bool:
        lo, hi = self.window
        return lo <= phi <= hi

    def check(self):
        if self.gamma < 2.0:
            raise WindowEmpty(f"gamma = {self.gamma:.4g} < 2 leaves no droplet in the window")


def detect_critical(X: Droplet, A: SiteSet, params: CriticalParams) -> bool:
    """Scan the merge trace of ``A`` inside ``X`` for a node in the window.

    Every trace node is internally spanned, so a hit is always genuine.  A
    miss can be wrong only when the smallest trace node reaching ``gamma/2``
    overshoots ``gamma`` (by less than 2).
    """
    params.check()
    trace = rectangles_process(A, X)
    return any(params.in_window(n.droplet.phi) for n in trace.nodes)


def detect_critical_mask(mask: np.ndarray, params: CriticalParams) -> bool:
    params.check()
    return any(params.in_window(n.droplet.phi) for n in rectangles_from_mask(mask).nodes)


@njit(cache=True)
def _spanned_subdroplet(occ, lo, hi):
    # occ is one closed component; look for any internally spanned
    # sub-rectangle with semi-perimeter in [lo, hi]
    h, w = occ.shape
    rows = np.zeros((h, w + 1), np.int32)
    cols = np.zeros((w, h + 1), np.int32)
    for y in range(h):
        for x in range(w):
            rows[y, x + 1] = rows[y, x] + occ[y, x]
    for x in range(w):
        for y in range(h):
            cols[x, y + 1] = cols[x, y] + occ[y, x]
    for a in range(w):
        for c in range(a, w):
            cw = c - a + 1
            if cw > hi:
                break
            for b in range(h):
                if rows[b, c + 1] - rows[b, a] == 0:
                    continue
                for d in range(b, h):
                    phi = cw + d - b + 1
                    if phi > hi:
                        break
                    if phi < lo:
                        continue
                    if rows[d, c + 1] - rows[d, a] == 0:
                        continue
                    if cols[a, d + 1] - cols[a, b] == 0:
                        continue
                    if cols[c, d + 1] - cols[c, b] == 0:
                        continue
                    sub = occ[b:d + 1, a:c + 1].copy()
                    if 2 * sub.sum() < phi:
                        continue
                    times, _ = timed_closure(sub, np.iinfo(np.int64).max)
                    full = True
                    for yy in range(d - b + 1):
                        for xx in range(cw):
                            if times[yy, xx] == NEVER:
                                full = False
                                break
                        if not full:
                            break
                    if full:
                        return True
    return False


def detect_critical_exact(X: Droplet, A: SiteSet, params: CriticalParams) -> bool:
    """Exhaustive search for an internally spanned droplet in the window.

    Any such droplet sits inside one component of the closure of ``A``
    within ``X``, so only sub-rectangles of those components are tried.
    """
    params.check()
    if X.lg > EXACT_BUDGET:
        raise BudgetExceeded(f"exact search limited to lg(X) <= {EXACT_BUDGET}, got {X.lg}")
    return critical_exact_mask(np.ascontiguousarray(X.crop(A.mask())), params)


def critical_exact_mask(occ: np.ndarray, params: CriticalParams) -> bool:
    from scipy import ndimage

    lo, hi = params.window
    closed = closure_mask(occ)
    labels, _ = ndimage.label(closed)
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        phi = (sl[0].stop - sl[0].start) + (sl[1].stop - sl[1].start)
        if phi < lo:
            continue
        if phi <= hi:
            return True
        if _spanned_subdroplet(np.ascontiguousarray(occ[sl]), lo, hi):
            return True
    return False


def al_scale_scan(D: Droplet, A: SiteSet) -> list[tuple[int, Droplet]]:
    """For each ``1 <= k <= lg(D)/2`` an internally spanned ``D' ⊆ D`` with
    ``k <= lg(D') <= 2k``, found by descending the merge tree of ``D``."""
    trace = rectangles_process(A, D)
    finals = trace.final_droplets()
    if finals != [D]:
        raise NotInternallySpanned(f"{D} is not internally spanned")
    root = trace.finals[0]
    out = []
    for k in range(1, D.lg // 2 + 1):
        i = root
        while trace.nodes[i].droplet.lg > 2 * k:
            p1, p2 = trace.nodes[i].parents
            l1, l2 = trace.nodes[p1].droplet.lg, trace.nodes[p2].droplet.lg
            i = p1 if l1 >= l2 else p2
        witness = trace.nodes[i].droplet
        assert k <= witness.lg <= 2 * k, (k, witness)
        out.append((k, witness))
    return out
