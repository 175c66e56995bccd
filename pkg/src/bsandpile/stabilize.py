"""Finite-step stabilization of the boundary sandpile.

Each phase first topples every site holding more than the capacity (this
only enlarges the visited set), then moves all interior mass onto the
boundary in one exact Dirichlet solve per connected component.  Once the
boundary is within capacity the configuration is final.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage

from .balayage import SourceSinkGraph, dirichlet_solve, sink_distribution, solve_masked, transfer_matrices
from .dynamics import BudgetExceeded, SandpileState, Schedule, run_bs_kernel
from .lattice import Grid, VisitedSet, laplacian_array
from .report import VerificationReport


@dataclass
class PhaseRecord:
    phase: int
    boundary: int
    visited: int
    interior_mass: float
    topplings: int
    seconds: float

    def to_line(self) -> str:
        return (f"phase={self.phase} boundary={self.boundary} visited={self.visited} "
                f"interior_mass={self.interior_mass:.6e} topplings={self.topplings} "
                f"seconds={self.seconds:.3f}")


@dataclass
class StabilizationResult:
    visited: VisitedSet
    odometer: Grid
    mass: Grid
    mu0: Grid
    capacity: float
    phases: int = 0
    topplings: int = 0
    wall_time: float = 0.0
    progress: list[PhaseRecord] = field(default_factory=list)

    @property
    def n(self) -> float:
        return float(self.mu0.data.sum())

    @property
    def d(self) -> int:
        return self.mass.d

    def state(self) -> SandpileState:
        return SandpileState(self.mass, self.odometer, self.visited, self.capacity, self.mu0,
                             self.topplings)

    def laplace_residual(self) -> float:
        return self.state().laplace_residual()


CROSS = {}


def components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Connected components of a point set under lattice adjacency."""
    d = mask.ndim
    if d not in CROSS:
        CROSS[d] = ndimage.generate_binary_structure(d, 1)
    return ndimage.label(mask, structure=CROSS[d])


def _matrix_balayage(V: VisitedSet, rho: np.ndarray, member: np.ndarray):
    """Balayage through the transfer matrices; returns (w, deposit) arrays."""
    g = SourceSinkGraph.from_visited(V, member)
    tm = transfer_matrices(g)
    origin = np.array(V.grid.origin)
    mu = np.array([rho[tuple(np.array(p) + origin)] for p in g.points])
    per_sink = sink_distribution(tm, mu)
    w = np.zeros(rho.shape)
    dep = np.zeros(rho.shape)
    for i, p in enumerate(g.points):
        # each source emits deg * (mass per edge) in total
        w[tuple(np.array(p) + origin)] = g.degree[i] * per_sink[i]
        for q in g.sink_edges[i]:
            dep[tuple(np.array(q) + origin)] += per_sink[i]
    return w, dep


def balayage_phase(state: SandpileState, route: str = "dirichlet", solver: str = "direct") -> float:
    """Move all interior mass of ``state`` to its boundary, per component.  Returns mass moved."""
    V = state.visited
    inner = V.interior_mask
    mass = state.mass.data
    moved = float(mass[inner].sum())
    if moved == 0.0:
        return 0.0
    labels, k = components(V.mask)
    carrying = np.unique(labels[inner & (mass > 0)])
    whole = len(carrying) == k
    for lab in ([None] if whole else carrying):
        member = V.mask if lab is None else labels == lab
        rho = np.where(member, mass, 0.0)
        comp = V if lab is None else VisitedSet(Grid(member, V.grid.origin))
        c_inner = comp.interior_mask
        src = np.where(c_inner, rho, 0.0)
        if route == "matrix":
            w, dep = _matrix_balayage(comp, src, member)
        else:
            sol = dirichlet_solve(comp, Grid(src, V.grid.origin), method=solver)
            w = sol.w.data
            dep = np.where(c_inner, 0.0, sol.deposit.data)
        state.odometer.data += w
        mass[c_inner] = 0.0
        mass += np.where(member & ~c_inner, dep, 0.0)
    return moved


def band_balayage(state: SandpileState, band: int, solver: str = "direct") -> tuple[float, float] | None:
    """Balayage of the interior mass lying within ``band`` steps of the outside.

    This is the limit of toppling only the interior sites of that band
    (each toppling is legal: interior sites with mass are unstable), so the
    visited set stays inside the true one.  Mass escaping inward piles up
    on the inner edge of the band.  Returns (moved, leftover deeper inside)
    or ``None`` when the band already covers the whole interior.
    """
    V = state.visited
    inner = V.interior_mask
    dist = ndimage.distance_transform_cdt(V.mask, metric="taxicab")
    W = inner & (dist <= band + 1)
    if W.sum() == inner.sum():
        return None
    mass = state.mass.data
    src = np.where(W, mass, 0.0)
    moved = float(src.sum())
    w = solve_masked(np.pad(W, 1), np.pad(src, 1), solver)[(slice(1, -1),) * W.ndim]
    lap = laplacian_array(np.pad(w, 1))[(slice(1, -1),) * W.ndim]
    state.odometer.data += w
    mass[W] = 0.0
    mass += np.where(W, 0.0, lap)
    return moved, float(mass[inner & ~W].sum())


def stabilize_fast(mu0, capacity: float, d: int | None = None, route: str = "dirichlet",
                   solver: str = "direct", band: int | None = 16, band_leftover: float = 0.05,
                   max_phases: int = 100_000, boundary_tol: float | None = None,
                   progress: Callable[[PhaseRecord], None] | None = None) -> StabilizationResult:
    """Stabilize ``mu0`` with boundary capacity ``capacity`` in finitely many phases.

    Each phase topples every site above capacity, then moves interior mass
    to the boundary.  ``route`` picks the exact balayage (``"dirichlet"`` or
    the small-graph ``"matrix"`` route).  With ``band`` set, a phase first
    tries the cheaper balayage over the outer ``band`` layers of the
    interior, and falls back to the exact global one when the boundary
    stops growing or more than ``band_leftover * n`` is stranded inside.
    The run only ends after an exact global balayage.

    A boundary site counts as over capacity only above ``capacity +
    boundary_tol`` (default ``1e-12 * n``) so round-off in the solves cannot
    trigger spurious topplings.
    """
    t0 = time.perf_counter()
    state = SandpileState.initial(mu0, capacity, d)
    n = state.n
    tol = 1e-12 * n if boundary_tol is None else boundary_tol
    cap = capacity + tol
    lifo = Schedule.lifo()
    records = []
    phases = 0
    while True:
        before = state.topplings
        run_bs_kernel(state, cap, cap, lifo, 10**15)
        has_inner = np.any(state.mass.data[state.visited.interior_mask] > 0)
        if state.topplings == before and not has_inner:
            break
        phases += 1
        if phases > max_phases:
            raise BudgetExceeded(f"phase cap {max_phases} reached")
        moved, exact = 0.0, True
        if band and has_inner and route == "dirichlet":
            out = band_balayage(state, band, solver)
            if out is not None:
                moved, leftover = out
                over = np.any(state.mass.data[state.visited.boundary_mask] > cap)
                exact = not over or leftover > band_leftover * n
        if exact:
            moved += balayage_phase(state, route, solver)
        rec = PhaseRecord(phases, int(state.visited.boundary_mask.sum()), len(state.visited),
                          moved, state.topplings - before, time.perf_counter() - t0)
        records.append(rec)
        if progress is not None:
            progress(rec)
        if exact and not np.any(state.mass.data[state.visited.boundary_mask] > cap):
            break
    return StabilizationResult(state.visited, state.odometer, state.mass, state.mu0, float(capacity),
                               phases, state.topplings, time.perf_counter() - t0, records)


# ---------------------------------------------------------------------------
# stabilizing pairs and minimality
# ---------------------------------------------------------------------------

def _common(radius, *grids):
    return [g.embed(radius) for g in grids]


def _to_grid(f, d, dtype=np.float64) -> Grid:
    if isinstance(f, Grid):
        return f
    if isinstance(f, VisitedSet):
        return f.grid
    return Grid.from_points(dict(f), d, dtype=dtype)


def check_stabilizing_pair(V: VisitedSet, u, mu0, capacity: float, tol: float | None = None) -> VerificationReport:
    """Test the defining conditions of a stabilizing pair ``(V, u)``.

    supp mu0 in V; u >= 0; u = 0 on ∂V and outside V; Δu = -mu0 on the
    interior; mu0 + Δu <= capacity on ∂V.  ``tol`` defaults to ``1e-9 * n``.
    """
    d = V.d
    ug = _to_grid(u, d)
    mg = _to_grid(mu0, d)
    n = float(mg.data.sum())
    tol = 1e-9 * max(n, 1.0) if tol is None else tol
    r = max(V.grid.symmetric_radius(), ug.symmetric_radius(), mg.symmetric_radius()) + 1
    member = V.grid.embed(r).data
    Vr = VisitedSet(Grid(member, (r,) * d))
    uu = ug.embed(r).data.astype(np.float64)
    mm = mg.embed(r).data.astype(np.float64)
    inner = Vr.interior_mask
    bnd = Vr.boundary_mask
    lap = laplacian_array(uu)
    checks = {
        "support": np.where(~member, mm, 0.0),
        "nonnegative": np.maximum(-uu, 0.0),
        "zero_on_boundary": np.where(~inner, np.abs(uu), 0.0),
        "poisson": np.where(inner, np.abs(lap + mm), 0.0),
        "capacity": np.where(bnd, np.maximum(mm + lap - capacity, 0.0), 0.0),
    }
    worst_name, worst, loc = None, 0.0, None
    per = {}
    for name, viol in checks.items():
        k = int(np.argmax(viol))
        v = float(viol.ravel()[k])
        per[name] = v
        if v > worst:
            worst_name, worst = name, v
            loc = tuple(int(i) - r for i in np.unravel_index(k, viol.shape))
    return VerificationReport("stabilizing_pair", {"capacity": capacity, "n": n}, worst, loc, tol,
                              worst <= tol, int(member.sum()),
                              {"violated": worst_name if worst > tol else None, "per_condition": per})


def minimality_probe(result: StabilizationResult, mu0, capacity: float,
                     candidates: Iterable[VisitedSet], tol: float | None = None) -> VerificationReport:
    """Every stabilizing candidate must contain the computed visited set."""
    mg = _to_grid(mu0, result.d)
    outcomes = []
    violations = 0
    for W in candidates:
        r = max(W.grid.symmetric_radius(), mg.symmetric_radius())
        WW = W.embed(r)
        if np.any((mg.embed(r).data > 0) & ~WW.mask):
            outcomes.append({"size": len(WW), "stabilizing": None, "contains": None})
            continue
        sol = dirichlet_solve(WW, mg.embed(r))
        rep = check_stabilizing_pair(WW, sol.w, mg, capacity, tol)
        contains = result.visited.issubset(WW)
        if rep.passed and not contains:
            violations += 1
        outcomes.append({"size": len(WW), "stabilizing": bool(rep.passed), "contains": bool(contains),
                         "worst": rep.worst})
    return VerificationReport("minimality", {"capacity": capacity, "n": result.n}, float(violations), None,
                              0.0, violations == 0, len(outcomes), {"candidates": outcomes})
