"""Scale hierarchy, cell classification, traversal predicates and up-right paths."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from numba import njit

from bootperc._kernels import NEVER, timed_closure
from bootperc.droplets import Droplet
from bootperc.grid import SiteSet

LAMBDA = math.pi ** 2 / 18
RATIO_C = 50.0


class ScaleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScaleParams:
    B: float = 50.0
    A_const: float = 5.0
    sigma: int = 36
    c_slow: float = 0.25
    p0: float = 0.2
    quick_B: float = 25.0
    strict: bool = True

    def __post_init__(self):
        if self.strict and self.B < 50:
            raise ValueError(f"B = {self.B} < 50; pass strict=False to override")
        if self.strict and self.sigma < 36:
            raise ValueError(f"sigma = {self.sigma} < 36; pass strict=False to override")
        if not 0 < self.c_slow < 0.5:
            raise ValueError(f"c_slow must lie in (0, 1/2), got {self.c_slow}")
        if not 0 < self.p0 < 1:
            raise ValueError(f"p0 must lie in (0, 1), got {self.p0}")
        if self.A_const <= 0:
            raise ValueError("A_const must be positive")
        if self.quick_B != 25.0:
            raise ValueError("quick_B is fixed at 25")

    def to_dict(self) -> dict:
        return asdict(self)

    def time_bound(self, m: int, p: float) -> int:
        return math.floor(self.B * m / p)


@dataclass(frozen=True)
class CriticalScale:
    p: float
    K_hat: float
    lam: float = LAMBDA

    def __post_init__(self):
        if self.K_hat < 1:
            raise ValueError("K_hat must be at least 1")

    @property
    def mu_hat(self) -> float:
        return self.p * math.log(self.K_hat)


@dataclass(frozen=True)
class CellClass:
    strongly_good: bool
    good: bool
    interior_empty: bool = False

    def __post_init__(self):
        if self.strongly_good and not self.good:
            raise AssertionError("strongly good cell classified as bad")

    @property
    def semi_good(self) -> bool:
        return self.good and not self.strongly_good

    @property
    def bad(self) -> bool:
        return not self.good

    @property
    def weakly_bad(self) -> bool:
        return not self.strongly_good


def classify_mask(cell: np.ndarray, t: int) -> CellClass:
    """Classify a square ``[y, x]`` occupancy block with time budget ``t``."""
    m = cell.shape[0]
    times, _ = timed_closure(np.ascontiguousarray(cell, dtype=np.bool_), t)
    done = times != NEVER
    strongly = bool(done.all())
    if m < 3:
        return CellClass(strongly, True, interior_empty=True)
    return CellClass(strongly, bool(done[1:-1, 1:-1].all()))


def classify_cell(D: Droplet, A: SiteSet, params: ScaleParams, p: float) -> CellClass:
    if not D.is_square:
        raise ValueError(f"cells are square, got {D.dims}")
    if p <= 0:
        raise ValueError("p must be positive")
    return classify_mask(D.crop(A.mask()), params.time_bound(D.width, p))


@dataclass(frozen=True)
class Scales:
    p: float
    n: int
    gamma: float
    K: float
    L: float
    M: float
    ratio_guard: float
    ratio_ok: bool
    params: dict

    def to_dict(self) -> dict:
        return asdict(self)


def ratio_guard_log(L: float, p: float, C: float = RATIO_C) -> float:
    """log of (C L^2 q^-8)^(1/L) (1-p)^(1/8); negative means the guard holds."""
    q = 1.0 - p
    return (math.log(C) + 2 * math.log(L) - 8 * math.log(q)) / L + math.log(q) / 8


def derive_scales(p: float, n: int, params: ScaleParams,
                  K_hat: float | Callable[[float], float]) -> Scales:
    """gamma, K, L and M for the given p and grid size.

    ``K_hat`` is either a number (taken as the critical size at
    ``min(p, p0)``) or a callable ``p -> K``, which is evaluated at
    ``min(p, p0)``.
    """
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    p_eff = min(p, params.p0)
    K = float(K_hat(p_eff) if callable(K_hat) else K_hat)
    if K < 1:
        raise ValueError("K must be at least 1")
    if n <= K:
        raise ValueError(f"n = {n} must exceed K = {K:.4g} for M to be defined")
    q = 1.0 - p
    gamma = p ** -3.0
    L = params.A_const * K * K * math.log(1.0 / q)
    ln_nk = math.log(n / K)
    M = max(params.A_const * math.sqrt(p * ln_nk) * K, params.A_const * ln_nk)
    g = ratio_guard_log(L, p)
    ok = g < 0
    if not ok:
        warnings.warn(f"ratio guard fails at p={p}, L={L:.4g} (log value {g:.4g})", ScaleWarning,
                      stacklevel=2)
    return Scales(p, n, gamma, K, L, M, g, ok, params.to_dict())


def _orient(S: Droplet) -> bool:
    """True when S is crossed bottom to top (taller than wide, or square)."""
    return S.height >= S.width


def is_traversable(S: Droplet, A: SiteSet) -> bool:
    """No empty double row (tall S) or double column (wide S)."""
    block = S.crop(A.mask())
    if not _orient(S):
        block = block.T
    rows = block.any(axis=1)
    if rows.size < 2:
        return bool(rows.all())
    return bool((rows[:-1] | rows[1:]).all())


def is_quickly_traversable(S: Droplet, A: SiteSet, p: float) -> bool:
    """Fill S from a full line just outside its near side within 25m/p steps.

    For tall S the line sits below and every row but the top one must be
    infected; for wide S the line sits to the left and every column but the
    rightmost must be.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    block = S.crop(A.mask())
    if not _orient(S):
        block = block.T
    m = S.lg - 1
    rows, cols = block.shape
    padded = np.ones((rows + 1, cols), dtype=np.bool_)
    padded[1:] = block
    times, _ = timed_closure(padded, math.floor(25 * m / p))
    return bool((times[1:rows] != NEVER).all())


def is_row_traversable(D: Droplet, A: SiteSet) -> bool:
    block = D.crop(A.mask())
    return bool(block.any(axis=1).all() and block.any(axis=0).all())


@njit(cache=True)
def _upright_lengths(blocked):
    h, w = blocked.shape
    out = np.zeros((h + 1, w + 1), np.int64)
    for y in range(h - 1, -1, -1):
        for x in range(w - 1, -1, -1):
            if not blocked[y, x]:
                out[y, x] = 1 + max(out[y, x + 1], out[y + 1, x])
    return out


def find_upright_uninfected_path(state: SiteSet, origin: tuple[int, int],
                                 length: int) -> list[tuple[int, int]] | None:
    """Up-right path of ``length`` sites outside ``state`` starting at ``origin``.

    Returns the lexicographically least such sequence of sites, which means
    stepping up whenever a long enough path still exists from there.
    """
    x, y = origin
    if not state.config.contains(x, y):
        raise ValueError(f"origin {origin} outside the grid")
    if length <= 0:
        return []
    best = _upright_lengths(state.mask())
    if best[y, x] < length:
        return None
    path = [(x, y)]
    for remaining in range(length - 1, 0, -1):
        if best[y + 1, x] >= remaining:
            y += 1
        else:
            x += 1
        path.append((x, y))
    return path
