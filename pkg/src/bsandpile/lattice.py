"""Lattice geometry on Z^d: neighbours, dense origin-centred grids, visited
sets with their boundary/interior split, discrete balls and the discrete
Laplacian.

Lattice point ``x`` lives at array index ``origin + x``; axis ``i`` of the
array is coordinate ``i`` of the point.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

Point = tuple[int, ...]


def neighbors(x: Sequence[int], d: int | None = None) -> list[Point]:
    """The 2d lattice neighbours of ``x`` in the order +e1, -e1, +e2, -e2, ..."""
    x = tuple(int(c) for c in x)
    if d is None:
        d = len(x)
    if len(x) != d:
        raise ValueError(f"point {x} is not {d}-dimensional")
    out = []
    for i in range(d):
        for s in (1, -1):
            y = list(x)
            y[i] += s
            out.append(tuple(y))
    return out


def unit_offsets(d: int) -> np.ndarray:
    """(2d, d) integer array of +e1, -e1, ..., matching :func:`neighbors`."""
    offs = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        offs[2 * i, i] = 1
        offs[2 * i + 1, i] = -1
    return offs


def squared_radius_floor(R: float) -> int:
    """Largest integer k with k <= R**2, computed exactly.

    ``R`` is taken as the exact rational value of its float (or Fraction)
    representation, so a lattice point with ``|x|**2 == R**2`` counts as
    inside.
    """
    if R < 0:
        raise ValueError("radius must be nonnegative")
    r = Fraction(R)
    return math.floor(r * r)


class Grid:
    """Dense grid over an integer box, default value outside the box.

    Writes outside the box grow it when ``growable`` is set, otherwise
    raise ``IndexError``.
    """

    def __init__(self, data: np.ndarray, origin: Sequence[int], default=0, growable: bool = True):
        data = np.ascontiguousarray(data)
        if data.ndim != len(origin):
            raise ValueError("origin must have one entry per axis")
        self.data = data
        self.origin = tuple(int(o) for o in origin)
        self.default = default
        self.growable = growable

    @classmethod
    def zeros(cls, radius: int | Sequence[int], d: int, dtype=np.float64, **kw) -> "Grid":
        """Grid over the box [-r_i, r_i] on each axis."""
        if np.isscalar(radius):
            radius = [int(radius)] * d
        shape = tuple(2 * int(r) + 1 for r in radius)
        return cls(np.zeros(shape, dtype=dtype), tuple(int(r) for r in radius), **kw)

    @classmethod
    def like(cls, other: "Grid", dtype=None) -> "Grid":
        return cls(np.zeros_like(other.data, dtype=dtype or other.data.dtype), other.origin,
                   growable=other.growable)

    @classmethod
    def from_points(cls, values: dict, d: int, dtype=np.float64, margin: int = 0) -> "Grid":
        pts = np.array(list(values), dtype=np.int64).reshape(-1, d)
        r = int(np.abs(pts).max()) + margin if len(pts) else margin
        g = cls.zeros(r, d, dtype=dtype)
        for p, v in values.items():
            g[p] = v
        return g

    # geometry ---------------------------------------------------------
    @property
    def d(self) -> int:
        return self.data.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def lo(self) -> tuple[int, ...]:
        return tuple(-o for o in self.origin)

    @property
    def hi(self) -> tuple[int, ...]:
        return tuple(s - 1 - o for s, o in zip(self.data.shape, self.origin))

    def index(self, x: Sequence[int]) -> tuple[int, ...] | None:
        idx = tuple(int(c) + o for c, o in zip(x, self.origin))
        if all(0 <= i < s for i, s in zip(idx, self.data.shape)):
            return idx
        return None

    def coords(self) -> list[np.ndarray]:
        """Open mesh of lattice coordinates, one broadcastable array per axis."""
        return [np.arange(s).reshape([-1 if a == i else 1 for a in range(self.d)]) - o
                for i, (s, o) in enumerate(zip(self.data.shape, self.origin))]

    def norm2(self) -> np.ndarray:
        """Squared Euclidean norm of every lattice point in the box (int64)."""
        out = np.zeros(self.shape, dtype=np.int64)
        for c in self.coords():
            out = out + c.astype(np.int64) ** 2
        return out

    # access -----------------------------------------------------------
    def __getitem__(self, x):
        idx = self.index(x)
        return self.default if idx is None else self.data[idx]

    def __setitem__(self, x, value):
        idx = self.index(x)
        if idx is None:
            if not self.growable:
                raise IndexError(f"{tuple(x)} outside box {self.lo}..{self.hi}")
            need = max(abs(int(c)) for c in x)
            self.grow_to(need)
            idx = self.index(x)
        self.data[idx] = value

    def grow_to(self, radius: int) -> None:
        """Enlarge the box so it contains [-radius, radius] on every axis."""
        pads = []
        for lo, hi in zip(self.lo, self.hi):
            pads.append((max(0, lo + radius), max(0, radius - hi)))
        self.pad(pads)

    def pad(self, pads: Sequence[tuple[int, int]]) -> None:
        if any(a or b for a, b in pads):
            self.data = np.pad(self.data, pads, constant_values=self.default)
            self.origin = tuple(o + a for o, (a, _) in zip(self.origin, pads))

    def symmetric_radius(self) -> int:
        return max(max(-l for l in self.lo), max(self.hi))

    def embed(self, radius: int | Sequence[int]) -> "Grid":
        """Copy into the box [-r_i, r_i]; the current box must fit."""
        g = Grid.zeros(radius, self.d, dtype=self.data.dtype)
        g.default = self.default
        sl = []
        for lo, hi, go in zip(self.lo, self.hi, g.origin):
            if lo + go < 0 or hi + go >= 2 * go + 1:
                raise ValueError("target box smaller than source")
            sl.append(slice(lo + go, hi + go + 1))
        g.data[tuple(sl)] = self.data
        return g

    def window(self, radius: int) -> np.ndarray:
        """Values on the box [-radius, radius]^d, cropping or padding with the default."""
        d = self.d
        out = np.full((2 * radius + 1,) * d, self.default, dtype=self.data.dtype)
        src, dst = [], []
        for lo, hi, o in zip(self.lo, self.hi, self.origin):
            a, b = max(lo, -radius), min(hi, radius)
            if a > b:
                return out
            src.append(slice(a + o, b + o + 1))
            dst.append(slice(a + radius, b + radius + 1))
        out[tuple(dst)] = self.data[tuple(src)]
        return out

    def copy(self) -> "Grid":
        return Grid(self.data.copy(), self.origin, self.default, self.growable)

    def points(self, mask: np.ndarray | None = None) -> list[Point]:
        """Lattice points where ``mask`` (default: value != default) holds."""
        if mask is None:
            mask = self.data != self.default
        idx = np.argwhere(mask)
        return [tuple(int(v) for v in row - np.array(self.origin)) for row in idx]

    def to_dict(self) -> dict[Point, float]:
        return {p: self[p].item() for p in self.points()}

    def total(self) -> float:
        return float(self.data.sum())

    def __repr__(self) -> str:
        return f"Grid(d={self.d}, box={self.lo}..{self.hi}, dtype={self.data.dtype})"


def shift(a: np.ndarray, axis: int, step: int, fill=0) -> np.ndarray:
    """``out[i] = a[i + step]`` along ``axis``, ``fill`` where that falls outside."""
    out = np.full_like(a, fill)
    n = a.shape[axis]
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis] = slice(step, n)
        dst[axis] = slice(0, n - step)
    else:
        src[axis] = slice(0, n + step)
        dst[axis] = slice(-step, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def neighbor_sum(a: np.ndarray) -> np.ndarray:
    """Sum of the 2d neighbour values, zero outside the array."""
    out = np.zeros(a.shape, dtype=np.result_type(a.dtype, np.float64))
    for ax in range(a.ndim):
        out += shift(a, ax, 1)
        out += shift(a, ax, -1)
    return out


def boundary_mask(member: np.ndarray) -> np.ndarray:
    """Members with at least one neighbour outside (cells past the array edge count as outside)."""
    member = member.astype(bool)
    all_in = np.ones_like(member)
    for ax in range(member.ndim):
        all_in &= shift(member, ax, 1, False)
        all_in &= shift(member, ax, -1, False)
    return member & ~all_in


def laplacian_array(f: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Discrete Laplacian of a whole array, zero assumed outside."""
    d = f.ndim
    return (neighbor_sum(f) - 2 * d * f) / (2 * d * h * h)


def laplacian(f: Grid, x: Sequence[int], h: float = 1.0) -> float:
    """(1/(2d h^2)) * sum over neighbours y of (f(y) - f(x))."""
    d = f.d
    fx = float(f[x])
    return sum(float(f[y]) - fx for y in neighbors(x, d)) / (2 * d * h * h)


class VisitedSet:
    """Finite set of lattice points with cached boundary and interior.

    The boundary holds members that have a neighbour outside the set; the
    interior is everything else.  Caches are dropped by :meth:`add` and
    :meth:`touch`.
    """

    def __init__(self, grid: Grid):
        if grid.data.dtype != np.bool_:
            grid = Grid(grid.data.astype(bool), grid.origin)
        grid.default = False
        self.grid = grid
        self._bmask = None

    @classmethod
    def from_points(cls, pts: Iterable[Sequence[int]], d: int, margin: int = 1) -> "VisitedSet":
        pts = [tuple(int(c) for c in p) for p in pts]
        r = max((max(abs(c) for c in p) for p in pts), default=0) + margin
        g = Grid.zeros(r, d, dtype=bool)
        g.default = False
        for p in pts:
            g[p] = True
        return cls(g)

    @classmethod
    def from_mask(cls, mask: np.ndarray, origin: Sequence[int]) -> "VisitedSet":
        return cls(Grid(mask.astype(bool), origin, default=False))

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def mask(self) -> np.ndarray:
        return self.grid.data

    def touch(self) -> None:
        """Invalidate caches after writing to ``mask`` directly."""
        self._bmask = None

    def add(self, x: Sequence[int]) -> None:
        self.grid[x] = True
        self.touch()

    def __contains__(self, x) -> bool:
        return bool(self.grid[x])

    def __len__(self) -> int:
        return int(self.mask.sum())

    @property
    def boundary_mask(self) -> np.ndarray:
        if self._bmask is None or self._bmask.shape != self.mask.shape:
            self._bmask = boundary_mask(self.mask)
        return self._bmask

    @property
    def interior_mask(self) -> np.ndarray:
        return self.mask & ~self.boundary_mask

    def boundary(self) -> list[Point]:
        return self.grid.points(self.boundary_mask)

    def interior(self) -> list[Point]:
        return self.grid.points(self.interior_mask)

    def points(self) -> list[Point]:
        return self.grid.points(self.mask)

    def as_set(self) -> set[Point]:
        return set(self.points())

    def embed(self, radius) -> "VisitedSet":
        return VisitedSet(self.grid.embed(radius))

    def copy(self) -> "VisitedSet":
        return VisitedSet(self.grid.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, VisitedSet):
            return NotImplemented
        return self.as_set() == other.as_set()

    def issubset(self, other: "VisitedSet") -> bool:
        r = max(self.grid.symmetric_radius(), other.grid.symmetric_radius())
        return bool(np.all(~self.embed(r).mask | other.embed(r).mask))


def partition(V: Iterable[Sequence[int]], d: int | None = None) -> tuple[list[Point], list[Point]]:
    """Split a finite point set into (boundary, interior)."""
    pts = {tuple(int(c) for c in p) for p in V}
    if not pts:
        return [], []
    if d is None:
        d = len(next(iter(pts)))
    bnd, inn = [], []
    for p in sorted(pts):
        if all(y in pts for y in neighbors(p, d)):
            inn.append(p)
        else:
            bnd.append(p)
    return bnd, inn


class DiscreteBall(VisitedSet):
    """Closed discrete ball {|x| <= R} together with its outer neighbours."""

    def __init__(self, R: float, d: int):
        self.R = R
        k = squared_radius_floor(R)
        r = math.isqrt(k) + 2
        g = Grid.zeros(r, d, dtype=bool)
        core = g.norm2() <= k
        member = core.copy()
        for ax in range(d):
            member |= shift(core, ax, 1, False) | shift(core, ax, -1, False)
        g.data[...] = member
        super().__init__(g)
        self.core_mask = core


def discrete_ball(R: float, d: int) -> DiscreteBall:
    return DiscreteBall(R, d)


def margin_mask(shape: Sequence[int], m: int) -> np.ndarray:
    """True for cells at least ``m`` cells away from every face of the box."""
    ok = np.ones(shape, dtype=np.uint8)
    for ax, s in enumerate(shape):
        sl = [slice(None)] * len(shape)
        sl[ax] = slice(0, min(m, s))
        ok[tuple(sl)] = 0
        sl[ax] = slice(max(s - m, 0), s)
        ok[tuple(sl)] = 0
    return ok


def flat_offsets(shape: Sequence[int]) -> np.ndarray:
    """Flat-index offsets of the 2d neighbours for a C-ordered array."""
    strides = np.cumprod((list(shape[1:]) + [1])[::-1])[::-1]
    offs = []
    for s in strides:
        offs += [int(s), -int(s)]
    return np.array(offs, dtype=np.int64)
