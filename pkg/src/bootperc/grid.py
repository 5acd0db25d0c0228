"""Two-neighbour bootstrap percolation on finite rectangular grids.

Sites are addressed as ``(x, y)`` with ``0 <= x < width`` and
``0 <= y < height``; ``y`` grows upwards, so "top" means larger ``y``.  The
1-based lattice ``[n]^2`` of the literature maps onto this by subtracting one
from each coordinate.

Occupancy is stored bit-packed, one row per line of ``uint64`` words, with
bit ``x % 64`` of word ``x // 64`` holding site ``(x, y)``.  Bits past
``width`` in the last word of each row are always zero.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from bootperc._kernels import NEVER, longest_double_runs, timed_closure

UNBOUNDED = None
MAGIC = b"BPGR"
FORMAT_VERSION = 1
_TEXT_LIMIT = 200


class NotPercolated(Enum):
    """Marker returned in place of a percolation time."""

    NOT_PERCOLATED = "not_percolated"

    def __repr__(self) -> str:
        return "NOT_PERCOLATED"


NOT_PERCOLATED = NotPercolated.NOT_PERCOLATED


class MaxStepsExceeded(RuntimeError):
    """Evolution hit its step budget before reaching a fixed point."""

    def __init__(self, steps: int, state: "SiteSet"):
        super().__init__(f"no fixed point within {steps} steps")
        self.steps = steps
        self.state = state


@dataclass(frozen=True)
class GridConfig:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @classmethod
    def square(cls, n: int) -> "GridConfig":
        return cls(n, n)

    @property
    def words(self) -> int:
        return (self.width + 63) // 64

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class SimParams:
    p: float
    seed: int = 0
    trial_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.trial_index < 0:
            raise ValueError("trial_index must be nonnegative")

    @property
    def q(self) -> float:
        return 1.0 - self.p


def _pack(mask: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    nw = (w + 63) // 64
    padded = np.zeros((h, nw * 64), dtype=bool)
    padded[:, :w] = mask
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view("<u8").astype(np.uint64)


def _unpack(words: np.ndarray, width: int) -> np.ndarray:
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return bits[:, :width].astype(bool)


class SiteSet:
    """An immutable set of sites of a grid."""

    __slots__ = ("config", "words")

    def __init__(self, config: GridConfig, words: np.ndarray):
        words = np.asarray(words, dtype=np.uint64)
        if words.shape != (config.height, config.words):
            raise ValueError(f"word array shape {words.shape} does not fit {config}")
        words = words.copy()
        words &= _row_mask(config)
        words.setflags(write=False)
        self.config = config
        self.words = words

    @classmethod
    def empty(cls, config: GridConfig) -> "SiteSet":
        return cls(config, np.zeros((config.height, config.words), np.uint64))

    @classmethod
    def full(cls, config: GridConfig) -> "SiteSet":
        return cls(config, np.full((config.height, config.words), ~np.uint64(0)))

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "SiteSet":
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("mask must be 2-D, indexed [y, x]")
        config = GridConfig(mask.shape[1], mask.shape[0])
        return cls(config, _pack(mask))

    @classmethod
    def from_sites(cls, config: GridConfig, sites: Iterable[tuple[int, int]]) -> "SiteSet":
        mask = np.zeros((config.height, config.width), dtype=bool)
        for x, y in sites:
            if not config.contains(x, y):
                raise ValueError(f"site {(x, y)} outside {config.width}x{config.height} grid")
            mask[y, x] = True
        return cls.from_mask(mask)

    def mask(self) -> np.ndarray:
        """Boolean occupancy indexed ``[y, x]`` (a fresh array)."""
        return _unpack(self.words, self.config.width)

    def sites(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.mask())
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def count(self) -> int:
        return int(np.bitwise_count(self.words).sum()) if hasattr(np, "bitwise_count") \
            else int(self.mask().sum())

    def is_empty(self) -> bool:
        return not self.words.any()

    def is_full(self) -> bool:
        return self == SiteSet.full(self.config)

    def __contains__(self, site) -> bool:
        x, y = site
        if not self.config.contains(x, y):
            return False
        return bool((int(self.words[y, x >> 6]) >> (x & 63)) & 1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SiteSet):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.config, self.words.tobytes()))

    def __or__(self, other: "SiteSet") -> "SiteSet":
        self._check(other)
        return SiteSet(self.config, self.words | other.words)

    def __and__(self, other: "SiteSet") -> "SiteSet":
        self._check(other)
        return SiteSet(self.config, self.words & other.words)

    def __sub__(self, other: "SiteSet") -> "SiteSet":
        self._check(other)
        return SiteSet(self.config, self.words & ~other.words)

    def __invert__(self) -> "SiteSet":
        return SiteSet(self.config, ~self.words)

    def issubset(self, other: "SiteSet") -> bool:
        self._check(other)
        return not (self.words & ~other.words).any()

    def _check(self, other: "SiteSet"):
        if self.config != other.config:
            raise ValueError("site sets live on different grids")

    def __repr__(self) -> str:
        c = self.config
        return f"SiteSet({c.width}x{c.height}, {self.count()} occupied)"

    # serialisation -------------------------------------------------------

    def to_text(self) -> str:
        return render_text(self.mask())

    @classmethod
    def from_text(cls, text: str) -> "SiteSet":
        return cls.from_mask(parse_text(text))

    def to_bytes(self) -> bytes:
        c = self.config
        header = MAGIC + struct.pack("<III", FORMAT_VERSION, c.width, c.height)
        return header + _rle_encode(self.mask().ravel())

    @classmethod
    def from_bytes(cls, data: bytes) -> "SiteSet":
        if len(data) < 16 or data[:4] != MAGIC:
            raise ValueError("not a BPGR grid file")
        version, width, height = struct.unpack("<III", data[4:16])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported BPGR version {version}")
        flat = _rle_decode(data[16:], width * height)
        return cls.from_mask(flat.reshape(height, width))


def _row_mask(config: GridConfig) -> np.ndarray:
    m = np.full(config.words, ~np.uint64(0))
    rem = config.width % 64
    if rem:
        m[-1] = np.uint64((1 << rem) - 1)
    return m


def _rle_encode(flat: np.ndarray) -> bytes:
    # alternating run lengths as LEB128 varints, first run counts zeros
    out = bytearray()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    for r in runs:
        while True:
            byte = r & 0x7F
            r >>= 7
            if r:
                out.append(byte | 0x80)
            else:
                out.append(byte)
                break
    return bytes(out)


def _rle_decode(payload: bytes, size: int) -> np.ndarray:
    flat = np.zeros(size, dtype=bool)
    pos, value, shift, acc = 0, False, 0, 0
    for byte in payload:
        acc |= (byte & 0x7F) << shift
        if byte & 0x80:
            shift += 7
            continue
        if pos + acc > size:
            raise ValueError("run lengths overflow the grid")
        flat[pos:pos + acc] = value
        pos += acc
        value = not value
        shift, acc = 0, 0
    if pos != size:
        raise ValueError(f"run lengths cover {pos} sites, expected {size}")
    return flat


def render_text(mask: np.ndarray) -> str:
    """'0'/'1' rows, highest ``y`` first so that "up" reads upwards."""
    h, w = mask.shape
    if h > _TEXT_LIMIT or w > _TEXT_LIMIT:
        raise ValueError(
            f"{w}x{h} grid too large for text rendering; use SiteSet.to_bytes()")
    return "\n".join("".join("1" if v else "0" for v in row) for row in mask[::-1])


def parse_text(text: str) -> np.ndarray:
    rows = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError("text grid must be a non-empty rectangle of 0/1 rows")
    if any(ch not in "01" for r in rows for ch in r):
        raise ValueError("text grid may contain only '0' and '1'")
    return np.array([[ch == "1" for ch in r] for r in rows[::-1]], dtype=bool)


@dataclass(frozen=True)
class InfectionField:
    """Per-site infection times; ``NEVER`` marks sites outside the span."""

    config: GridConfig
    time: np.ndarray

    def __post_init__(self):
        self.time.setflags(write=False)

    @property
    def infected(self) -> np.ndarray:
        return self.time != NEVER

    def at(self, t: int) -> SiteSet:
        return SiteSet.from_mask(self.time <= t)

    def last_time(self) -> int:
        finite = self.time[self.infected]
        return int(finite.max()) if finite.size else 0


def sample_initial(config: GridConfig, params: SimParams) -> SiteSet:
    """A p-random subset drawn from a counter-based stream.

    The Philox key is ``(seed, trial_index)`` and the counter runs over sites
    in row-major order, so each trial is reproducible on its own.
    """
    return SiteSet.from_mask(sample_mask(config.width, config.height, params))


def sample_mask(width: int, height: int, params: SimParams) -> np.ndarray:
    if params.p <= 0.0:
        return np.zeros((height, width), dtype=bool)
    if params.p >= 1.0:
        return np.ones((height, width), dtype=bool)
    return stream(params.seed, params.trial_index).random((height, width)) < params.p


def stream(seed: int, trial_index: int) -> np.random.Generator:
    key = [seed & 0xFFFFFFFFFFFFFFFF, trial_index & 0xFFFFFFFFFFFFFFFF]
    return np.random.Generator(np.random.Philox(key=key))


def _step_words(w: np.ndarray, row_mask: np.ndarray) -> np.ndarray:
    one = np.uint64(1)
    top = np.uint64(63)
    # west[x] = w[x-1]: shift towards higher bit indices, carrying across words
    west = w << one
    west[:, 1:] |= w[:, :-1] >> top
    east = w >> one
    east[:, :-1] |= w[:, 1:] << top
    north = np.zeros_like(w)
    north[:-1] = w[1:]
    south = np.zeros_like(w)
    south[1:] = w[:-1]
    # at least two of four: half-adders on the two axis pairs
    two = (west & east) | (north & south) | ((west ^ east) & (north ^ south))
    return (w | two) & row_mask


def step(state: SiteSet) -> SiteSet:
    """One synchronous update of the 2-neighbour rule."""
    return SiteSet(state.config, _step_words(state.words, _row_mask(state.config)))


def evolve_to(initial: SiteSet, t: int) -> SiteSet:
    """The infected set at time ``t`` (stops early at a fixed point)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    row_mask = _row_mask(initial.config)
    w = initial.words.copy()
    for _ in range(t):
        nxt = _step_words(w, row_mask)
        if np.array_equal(nxt, w):
            break
        w = nxt
    return SiteSet(initial.config, w)


@dataclass(frozen=True)
class Evolution:
    closure: SiteSet
    field: InfectionField | None
    T: int | NotPercolated
    steps: int

    @property
    def percolated(self) -> bool:
        return self.T is not NOT_PERCOLATED

    def __iter__(self):
        return iter((self.closure, self.field, self.T))


def evolve(initial: SiteSet, max_steps: int | None = UNBOUNDED, *,
           track_times: bool = True, engine: str = "bitboard") -> Evolution:
    """Run the process to its fixed point.

    ``engine="bitboard"`` steps the packed words until nothing changes;
    ``engine="queue"`` uses the layered kernel, which costs time linear in
    the area regardless of the number of steps.  Both give identical
    results.  Raises :class:`MaxStepsExceeded` if ``max_steps`` steps pass
    without reaching a fixed point.
    """
    config = initial.config
    if engine == "queue":
        limit = np.iinfo(np.int64).max if max_steps is None else max_steps + 1
        times, last = timed_closure(initial.mask(), limit)
        if max_steps is not None and last > max_steps:
            raise MaxStepsExceeded(max_steps, SiteSet.from_mask(times <= max_steps))
        closure = SiteSet.from_mask(times != NEVER)
        field = InfectionField(config, times) if track_times else None
        T = last if closure.is_full() else NOT_PERCOLATED
        return Evolution(closure, field, T, last)
    if engine != "bitboard":
        raise ValueError(f"unknown engine {engine!r}")

    row_mask = _row_mask(config)
    w = initial.words.copy()
    times = None
    if track_times:
        times = np.full((config.height, config.width), NEVER, np.int32)
        times[_unpack(w, config.width)] = 0
    bound = config.area if max_steps is None else max_steps
    t = 0
    while True:
        nxt = _step_words(w, row_mask)
        if np.array_equal(nxt, w):
            break
        if t >= bound:
            raise MaxStepsExceeded(t, SiteSet(config, w))
        t += 1
        if times is not None:
            times[_unpack(nxt & ~w, config.width)] = t
        w = nxt
    closure = SiteSet(config, w)
    field = InfectionField(config, times) if times is not None else None
    T = t if closure.is_full() else NOT_PERCOLATED
    return Evolution(closure, field, T, t)


class Orientation(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


@dataclass(frozen=True)
class DoubleLine:
    length: int
    orientation: Orientation | None
    position: tuple[int, int] | None
    interior: bool = False

    def __iter__(self):
        return iter((self.length, self.orientation, self.position))


def longest_empty_double_line(A: SiteSet) -> DoubleLine:
    """Longest all-empty 2 x L (or L x 2) rectangle inside the grid.

    ``position`` is the lower-left site of the witness.  Ties prefer the
    horizontal orientation, then the lowest row, then the leftmost start.
    """
    occ = A.mask()
    h, w = occ.shape
    hl, hrow, hstart, vl, vcol, vstart = longest_double_runs(occ)
    best = DoubleLine(0, None, None)
    if hl > 0:
        best = DoubleLine(hl, Orientation.HORIZONTAL, (hstart, hrow))
    if vl > best.length:
        best = DoubleLine(vl, Orientation.VERTICAL, (vcol, vstart))
    if best.orientation is None:
        return best
    x0, y0 = best.position
    if best.orientation is Orientation.HORIZONTAL:
        x1, y1 = x0 + best.length - 1, y0 + 1
    else:
        x1, y1 = x0 + 1, y0 + best.length - 1
    interior = x0 > 0 and y0 > 0 and x1 < w - 1 and y1 < h - 1
    return DoubleLine(best.length, best.orientation, best.position, interior)


def blocking_lower_bound(length: int) -> int:
    """Lower bound on T forced by an empty double line of this length."""
    return (length - 1) // 2 if length >= 3 else 0
