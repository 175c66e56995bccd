"""Toppling engines.

* boundary sandpile with real masses (``stabilize_naive``): sites on the
  boundary of the visited set topple above the capacity, interior sites
  topple whenever they carry mass;
* classical abelian sandpile with integer chips (``stabilize_asm``);
* an ASM variant whose boundary sites may hold up to ``capacity`` chips
  (``stabilize_asm_capped``).

The heavy loops are numba kernels over flattened arrays.  A kernel returns
``NEED_GROW`` when a toppling would touch the edge of the box; the Python
driver then pads every array and resumes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba as nb
import numpy as np

from .lattice import Grid, VisitedSet, boundary_mask, flat_offsets, margin_mask, neighbors, shift

DONE, NEED_GROW, OUT_OF_BUDGET = 0, 1, 2
FIFO, LIFO, RANDOM = 0, 1, 2


class BudgetExceeded(RuntimeError):
    """Raised when a run hits its toppling or phase cap before stabilizing."""


class Policy(enum.IntEnum):
    FIFO = FIFO
    LIFO = LIFO
    RANDOM = RANDOM


@dataclass(frozen=True)
class Schedule:
    """Order in which unstable sites are picked from the worklist.

    Every unstable site stays on the worklist until it topples, so any
    policy is infinitive on the visited sites.
    """

    policy: Policy = Policy.FIFO
    seed: int = 0

    @classmethod
    def fifo(cls) -> "Schedule":
        return cls(Policy.FIFO)

    @classmethod
    def lifo(cls) -> "Schedule":
        return cls(Policy.LIFO)

    @classmethod
    def random(cls, seed: int = 0) -> "Schedule":
        return cls(Policy.RANDOM, seed)


def _as_grid(field_, d: int | None, dtype) -> Grid:
    if isinstance(field_, Grid):
        return Grid(field_.data.astype(dtype), field_.origin)
    if not field_:
        raise ValueError("empty initial field")
    d = d or len(next(iter(field_)))
    return Grid.from_points(dict(field_), d, dtype=dtype)


def _grow_pads(shape, frac=0.5, minimum=8):
    return [(max(minimum, int(s * frac)),) * 2 for s in shape]


# ---------------------------------------------------------------------------
# boundary sandpile
# ---------------------------------------------------------------------------

@dataclass
class SandpileState:
    """Mass, odometer and visited set of a boundary sandpile on one shared box."""

    mass: Grid
    odometer: Grid
    visited: VisitedSet
    capacity: float
    mu0: Grid
    topplings: int = 0

    @classmethod
    def initial(cls, mu0, capacity: float, d: int | None = None, radius: int | None = None) -> "SandpileState":
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        g = _as_grid(mu0, d, np.float64)
        if np.any(g.data < 0):
            raise ValueError("initial mass must be nonnegative")
        if not np.any(g.data > 0):
            raise ValueError("initial mass is identically zero")
        r = max(g.symmetric_radius() + 3, radius or 0)
        g = g.embed(r)
        vis = VisitedSet(Grid(g.data > 0, g.origin))
        return cls(g.copy(), Grid.like(g), vis, float(capacity), g)

    @property
    def d(self) -> int:
        return self.mass.d

    @property
    def n(self) -> float:
        return float(self.mu0.data.sum())

    @property
    def origin(self) -> tuple[int, ...]:
        return self.mass.origin

    def grids(self):
        return [self.mass, self.odometer, self.visited.grid, self.mu0]

    def pad(self, pads) -> None:
        for g in self.grids():
            g.pad(pads)
        self.visited.touch()

    def embed(self, radius: int) -> None:
        """Re-embed every grid into the symmetric box [-radius, radius]^d."""
        self.mass = self.mass.embed(radius)
        self.odometer = self.odometer.embed(radius)
        self.mu0 = self.mu0.embed(radius)
        self.visited = self.visited.embed(radius)

    def ensure_margin(self, m: int = 3) -> None:
        """Pad so every visited site is at least ``m`` cells from the box edge."""
        idx = np.argwhere(self.visited.mask)
        pads = []
        for ax, s in enumerate(self.mass.shape):
            lo = m - idx[:, ax].min()
            hi = idx[:, ax].max() - (s - 1 - m)
            pads.append((max(0, lo), max(0, hi)))
        self.pad(pads)

    def copy(self) -> "SandpileState":
        return SandpileState(self.mass.copy(), self.odometer.copy(), self.visited.copy(),
                             self.capacity, self.mu0.copy(), self.topplings)

    def laplace_residual(self) -> float:
        """max |Δu - (μ - μ0)| over the box."""
        from .lattice import laplacian_array
        lap = laplacian_array(np.pad(self.odometer.data, 1))[(slice(1, -1),) * self.d]
        return float(np.abs(lap - (self.mass.data - self.mu0.data)).max())


def is_unstable(state: SandpileState, x: Sequence[int], tol: float = 0.0) -> bool:
    """Boundary site above capacity, or interior site with positive mass."""
    if x not in state.visited:
        return False
    m = float(state.mass[x])
    on_boundary = any(y not in state.visited for y in neighbors(x, state.d))
    if on_boundary:
        return m > state.capacity + tol
    return m > 0.0


def topple(state: SandpileState, x: Sequence[int]) -> SandpileState:
    """Topple ``x`` in place when it is unstable; identity otherwise."""
    x = tuple(int(c) for c in x)
    if not is_unstable(state, x):
        return state
    if state.mass.index([c + (3 if c >= 0 else -3) for c in x]) is None:
        state.ensure_margin(3)
        state.embed(max(state.mass.symmetric_radius(), max(abs(c) for c in x) + 3))
    m = float(state.mass[x])
    share = m / (2 * state.d)
    state.mass[x] = 0.0
    state.odometer[x] = float(state.odometer[x]) + m
    for y in neighbors(x, state.d):
        state.mass[y] = float(state.mass[y]) + share
        state.visited.grid[y] = True
    state.visited.touch()
    state.topplings += 1
    return state


@nb.njit(cache=True)
def _on_boundary(vis, k, offs):
    for o in offs:
        if vis[k + o] == 0:
            return True
    return False


@nb.njit(cache=True)
def _bs_unstable(mass, vis, k, offs, cap, theta):
    if vis[k] == 0:
        return False
    if _on_boundary(vis, k, offs):
        return mass[k] > cap
    return mass[k] > theta


@nb.njit(cache=True)
def _bs_kernel(mass, odo, vis, ok, offs, cap, theta, policy, seed, budget, counter):
    """Topple until no site is unstable (interior sites use ``theta`` as threshold).

    ``counter[0]`` accumulates topplings.  Returns DONE, NEED_GROW or OUT_OF_BUDGET.
    """
    N = mass.size
    nd = offs.size
    if policy == 2:
        np.random.seed(seed)
    inq = np.zeros(N, np.uint8)
    work = np.empty(N, np.int64)
    head = 0
    size = 0
    for k in range(N):
        if vis[k] != 0:
            if _bs_unstable(mass, vis, k, offs, cap, theta):
                work[(head + size) % N] = k
                size += 1
                inq[k] = 1
    while size > 0:
        if policy == 0:
            k = work[head]
            head = (head + 1) % N
        elif policy == 1:
            k = work[(head + size - 1) % N]
        else:
            i = np.random.randint(size)
            j = (head + i) % N
            k = work[j]
            work[j] = work[(head + size - 1) % N]
        size -= 1
        inq[k] = 0
        if not _bs_unstable(mass, vis, k, offs, cap, theta):
            continue
        if ok[k] == 0:
            return 1
        if counter[0] >= budget:
            return 2
        m = mass[k]
        share = m / nd
        mass[k] = 0.0
        odo[k] += m
        counter[0] += 1
        for o in offs:
            j = k + o
            mass[j] += share
            if vis[j] == 0:
                vis[j] = 1
                # neighbours of a newly visited site may have turned interior
                for o2 in offs:
                    z = j + o2
                    if inq[z] == 0 and vis[z] != 0:
                        if _bs_unstable(mass, vis, z, offs, cap, theta):
                            work[(head + size) % N] = z
                            size += 1
                            inq[z] = 1
        for o in offs:
            j = k + o
            if inq[j] == 0 and _bs_unstable(mass, vis, j, offs, cap, theta):
                work[(head + size) % N] = j
                size += 1
                inq[j] = 1
    return 0


def run_bs_kernel(state: SandpileState, cap: float, theta: float, schedule: Schedule,
                  budget: int) -> None:
    """Drive :func:`_bs_kernel` on ``state`` in place, growing the box on demand."""
    counter = np.zeros(1, np.int64)
    counter[0] = state.topplings
    state.ensure_margin(3)
    while True:
        shape = state.mass.shape
        ok = margin_mask(shape, 2).ravel()
        vis = state.visited.mask.view(np.uint8).ravel()
        status = _bs_kernel(state.mass.data.ravel(), state.odometer.data.ravel(), vis, ok,
                            flat_offsets(shape), float(cap), float(theta), int(schedule.policy),
                            int(schedule.seed), int(budget), counter)
        state.visited.touch()
        state.topplings = int(counter[0])
        if status == NEED_GROW:
            state.pad(_grow_pads(shape))
            continue
        if status == OUT_OF_BUDGET:
            raise BudgetExceeded(f"toppling budget {budget} exhausted")
        return


def stabilize_naive(mu0, capacity: float, eps: float = 1e-12, schedule: Schedule | None = None,
                    d: int | None = None, max_topplings: int = 10**9,
                    boundary_tol: float | None = None) -> SandpileState:
    """Stabilize by plain toppling until the interior holds at most ``eps * n`` in total.

    The exact process needs infinitely many topplings; stopping once the
    leftover interior mass is below ``eps * n`` leaves the odometer within
    a few ``eps * n`` of its limit.  Boundary sites count as unstable above
    ``capacity + boundary_tol`` (default ``1e-12 * n``) so that floating
    round-off cannot tip an exact tie.

    Interior sites topple in passes with a threshold that shrinks by 4 per
    pass down to ``eps * n / (2 |interior|)``.  Without the staging a
    depth-first (LIFO) schedule keeps toppling crumbs just above the final
    threshold and needs orders of magnitude more topplings.
    """
    schedule = schedule or Schedule.fifo()
    state = SandpileState.initial(mu0, capacity, d)
    n = state.n
    tol = 1e-12 * n if boundary_tol is None else boundary_tol
    target = eps * n
    theta = n / 4
    while True:
        run_bs_kernel(state, capacity + tol, theta, schedule, max_topplings)
        inner = state.visited.interior_mask
        left = float(state.mass.data[inner].sum())
        if left <= target:
            return state
        theta = max(theta / 4, target / max(int(inner.sum()), 1) / 2)


# ---------------------------------------------------------------------------
# abelian sandpile (integer chips)
# ---------------------------------------------------------------------------

@dataclass
class ChipState:
    """Chip configuration and toppling counts of an abelian sandpile run."""

    chips: Grid
    odometer: Grid
    chips0: Grid
    capacity: int | None = None
    visited_grid: Grid | None = None
    firings: int = 0

    @property
    def d(self) -> int:
        return self.chips.d

    @property
    def n(self) -> int:
        return int(self.chips0.data.sum())

    @property
    def visited(self) -> VisitedSet:
        """Sites that ever held chips."""
        if self.visited_grid is not None:
            return VisitedSet(self.visited_grid)
        fired = self.odometer.data > 0
        member = fired | (self.chips0.data > 0)
        for ax in range(self.d):
            member |= shift(fired, ax, 1, False) | shift(fired, ax, -1, False)
        return VisitedSet(Grid(member, self.chips.origin))

    def embed(self, radius: int) -> None:
        self.chips = self.chips.embed(radius)
        self.odometer = self.odometer.embed(radius)
        self.chips0 = self.chips0.embed(radius)
        if self.visited_grid is not None:
            self.visited_grid = self.visited_grid.embed(radius)


@nb.njit(cache=True)
def _chip_unstable(s, vis, k, offs, nd, cap, capped):
    if s[k] < nd:
        return False  # stable under either rule since cap >= nd - 1
    if capped:
        if vis[k] == 0:
            return False
        if _on_boundary(vis, k, offs):
            return s[k] > cap
    return s[k] >= nd


@nb.njit(cache=True)
def _chip_kernel(s, u, vis, ok, offs, cap, capped, policy, seed, counter):
    N = s.size
    nd = offs.size
    if policy == 2:
        np.random.seed(seed)
    inq = np.zeros(N, np.uint8)
    work = np.empty(N, np.int64)
    head = 0
    size = 0
    for k in range(N):
        if _chip_unstable(s, vis, k, offs, nd, cap, capped):
            work[(head + size) % N] = k
            size += 1
            inq[k] = 1
    while size > 0:
        if policy == 0:
            k = work[head]
            head = (head + 1) % N
        elif policy == 1:
            k = work[(head + size - 1) % N]
        else:
            i = np.random.randint(size)
            j = (head + i) % N
            k = work[j]
            work[j] = work[(head + size - 1) % N]
        size -= 1
        inq[k] = 0
        if not _chip_unstable(s, vis, k, offs, nd, cap, capped):
            continue
        if ok[k] == 0:
            return 1
        if capped and _on_boundary(vis, k, offs):
            f = (s[k] - cap + nd - 1) // nd
        else:
            f = s[k] // nd
        s[k] -= nd * f
        u[k] += f
        counter[0] += f
        for o in offs:
            j = k + o
            s[j] += f
            if vis[j] == 0:
                vis[j] = 1
                for o2 in offs:
                    z = j + o2
                    if inq[z] == 0 and vis[z] != 0 and _chip_unstable(s, vis, z, offs, nd, cap, capped):
                        work[(head + size) % N] = z
                        size += 1
                        inq[z] = 1
        for o in offs:
            j = k + o
            if inq[j] == 0 and _chip_unstable(s, vis, j, offs, nd, cap, capped):
                work[(head + size) % N] = j
                size += 1
                inq[j] = 1
        if inq[k] == 0 and _chip_unstable(s, vis, k, offs, nd, cap, capped):
            work[(head + size) % N] = k
            size += 1
            inq[k] = 1
    return 0


@nb.njit(cache=True)
def _chip_sweep_kernel(s, u, vis, ok, offs, cap, capped, counter):
    """Alternating forward/backward raster sweeps, firing every unstable site met.

    After each sweep only the span of cells that fired (widened by two
    neighbour offsets, enough to cover sites whose boundary status changed)
    is rescanned.  Much faster than a worklist for large point masses.
    """
    N = s.size
    nd = offs.size
    reach = 2 * offs.max()
    lo = 0
    hi = N
    forward = True
    while True:
        first = N
        last = -1
        for t in range(hi - lo):
            k = lo + t if forward else hi - 1 - t
            if not _chip_unstable(s, vis, k, offs, nd, cap, capped):
                continue
            if ok[k] == 0:
                return 1
            if capped and _on_boundary(vis, k, offs):
                f = (s[k] - cap + nd - 1) // nd
            else:
                f = s[k] // nd
            s[k] -= nd * f
            u[k] += f
            counter[0] += f
            for o in offs:
                s[k + o] += f
                vis[k + o] = 1
            if k < first:
                first = k
            if k > last:
                last = k
        if last < 0:
            return 0
        lo = max(first - reach, 0)
        hi = min(last + reach + 1, N)
        forward = not forward


def _run_chips(chips0, capacity, capped: bool, schedule: Schedule | None, d) -> ChipState:
    g = _as_grid(chips0, d, np.int64)
    if np.any(g.data < 0):
        raise ValueError("chip counts must be nonnegative")
    n = int(g.data.sum())
    dd = g.d
    # cluster radius grows like n^(1/d); start near it and grow on demand
    r0 = g.symmetric_radius() + 4 + int(1.2 * (n / (2 * dd)) ** (1 / dd))
    g = g.embed(r0)
    state = ChipState(g.copy(), Grid.like(g), g, capacity if capped else None)
    vis_grid = Grid(g.data > 0, g.origin) if capped else Grid(np.ones(g.shape, bool), g.origin)
    counter = np.zeros(1, np.int64)
    while True:
        shape = state.chips.shape
        args = (state.chips.data.ravel(), state.odometer.data.ravel(),
                vis_grid.data.view(np.uint8).ravel(), margin_mask(shape, 2).ravel(),
                flat_offsets(shape), int(capacity or 0), capped)
        if schedule is None:
            status = _chip_sweep_kernel(*args, counter)
        else:
            status = _chip_kernel(*args, int(schedule.policy), int(schedule.seed), counter)
        if status == NEED_GROW:
            pads = _grow_pads(shape)
            for gg in (state.chips, state.odometer, state.chips0):
                gg.pad(pads)
            vis_grid.pad(pads)
            if not capped:
                vis_grid.data[...] = True
            continue
        break
    state.firings = int(counter[0])
    if capped:
        state.visited_grid = vis_grid
    return state


def stabilize_asm(chips0, schedule: Schedule | None = None, d: int | None = None) -> ChipState:
    """Classical abelian sandpile: a site with at least 2d chips sends one to each neighbour.

    ``schedule=None`` uses raster sweeps; an explicit :class:`Schedule`
    drives a worklist in that order instead.
    """
    return _run_chips(chips0, None, False, schedule, d)


def capped_firings(chips: int, capacity: int, d: int, on_boundary: bool) -> int:
    """Number of ASM firings a site performs when it is next processed."""
    nd = 2 * d
    if on_boundary:
        return max(0, -(-(chips - capacity) // nd))
    return chips // nd


def stabilize_asm_capped(chips0, capacity: int, schedule: Schedule | None = None,
                         d: int | None = None) -> ChipState:
    """ASM whose boundary sites (of the visited set) hold up to ``capacity`` chips.

    Interior sites follow the ordinary rule (stable iff at most 2d-1
    chips).  A boundary site with m > capacity chips fires
    ceil((m - capacity) / 2d) ordinary firings at once; its neighbours then
    join the visited set.  This is one reading of a rule that is only
    sketched in the literature, kept here as exploratory.
    """
    g = _as_grid(chips0, d, np.int64)
    if capacity < 2 * g.d - 1:
        raise ValueError("capacity must be at least 2d-1")
    return _run_chips(g, int(capacity), True, schedule, None)
