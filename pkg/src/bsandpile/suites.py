"""Randomized and sweep verification suites shared by the CLI and the test suite.

Each suite takes ``seeds`` (number of random instances) and ``ns`` (point
masses for sweeps) and returns a list of reports.
"""
from __future__ import annotations

import numpy as np

from .balayage import (SourceSinkGraph, dirichlet_solve, sink_distribution, spectral_radius,
                       transfer_matrices)
from .dynamics import Schedule, stabilize_asm, stabilize_naive
from .lattice import Grid, VisitedSet
from .report import VerificationReport
from .scaling import boundary_cone_check
from .stabilize import components, stabilize_fast
from .verify import (verify_asm_least_action, verify_growth, verify_lipschitz, verify_lower_bound,
                     verify_monotonicity, verify_simply_connected, verify_symmetry)


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

def random_field(rng, d: int, half: int, max_sources: int = 6, max_mass: float = 60.0) -> dict:
    """A few random point masses inside the box [-half, half]^d."""
    k = int(rng.integers(1, max_sources + 1))
    out = {}
    for _ in range(k):
        p = tuple(int(c) for c in rng.integers(-half, half + 1, size=d))
        out[p] = out.get(p, 0.0) + float(rng.uniform(1.0, max_mass))
    return out


def random_capacity(rng, field_: dict) -> float:
    n = sum(field_.values())
    return float(rng.uniform(0.05, 0.5) * n ** 0.5 + 0.5)


def random_visited(rng, side: int = 15, fill: float = 0.75) -> VisitedSet:
    """Random lattice-connected set inside a side x side box with a non-empty interior."""
    while True:
        m = rng.random((side, side)) < fill
        lab, k = components(m)
        if k == 0:
            continue
        sizes = np.bincount(lab.ravel())[1:]
        keep = lab == (1 + int(np.argmax(sizes)))
        V = VisitedSet(Grid(np.pad(keep, 1), (side // 2 + 1,) * 2))
        if V.interior_mask.any():
            return V


def max_field_diff(a: Grid, b: Grid) -> float:
    r = max(a.symmetric_radius(), b.symmetric_radius())
    return float(np.abs(a.embed(r).data.astype(np.float64) - b.embed(r).data).max())


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def abelian(seeds: int = 20, ns=None, seed: int = 1) -> list[VerificationReport]:
    """FIFO and seeded RANDOM schedules reach the same final state."""
    rng = np.random.default_rng(seed)
    worst, worst_case, fails = 0.0, None, 0
    for i in range(seeds):
        f = random_field(rng, 2, 4)
        cap = random_capacity(rng, f)
        n = sum(f.values())
        a = stabilize_naive(f, cap, schedule=Schedule.fifo())
        b = stabilize_naive(f, cap, schedule=Schedule.random(1000 + i))
        diff = max(max_field_diff(a.mass, b.mass), max_field_diff(a.odometer, b.odometer)) / n
        same_set = a.visited == b.visited
        if diff > worst:
            worst, worst_case = diff, i
        fails += (not same_set) or diff > 1e-8
    out = [VerificationReport("abelian_bs", {"instances": seeds, "seed": seed}, worst, worst_case, 1e-8,
                              fails == 0, seeds)]
    afail = 0
    for i in range(seeds):
        chips = {tuple(int(c) for c in rng.integers(-4, 5, size=2)): int(rng.integers(1, 200))
                 for _ in range(int(rng.integers(1, 7)))}
        a = stabilize_asm(chips, Schedule.fifo())
        b = stabilize_asm(chips, Schedule.random(2000 + i))
        c = stabilize_asm(chips)
        if max_field_diff(a.odometer, b.odometer) != 0 or max_field_diff(a.odometer, c.odometer) != 0:
            afail += 1
    out.append(VerificationReport("abelian_asm", {"instances": seeds, "seed": seed}, float(afail), None,
                                  0.0, afail == 0, seeds))
    return out


def oracle(seeds: int = 30, ns=None, seed: int = 2, seeds_3d: int = 10) -> list[VerificationReport]:
    """Finite-step stabilization agrees with plain toppling."""
    rng = np.random.default_rng(seed)
    out = []
    for d, count, half in ((2, seeds, 10), (3, seeds_3d, 3)):
        worst, fails, where = 0.0, 0, None
        for i in range(count):
            f = random_field(rng, d, half)
            cap = random_capacity(rng, f)
            n = sum(f.values())
            a = stabilize_fast(f, cap, d)
            b = stabilize_naive(f, cap, d=d)
            diff = max(max_field_diff(a.mass, b.mass), max_field_diff(a.odometer, b.odometer)) / n
            same = a.visited == b.visited
            if diff > worst:
                worst, where = diff, i
            fails += (not same) or diff > 1e-8
        out.append(VerificationReport(f"oracle_d{d}", {"instances": count, "seed": seed}, worst, where,
                                      1e-8, fails == 0, count))
    return out


def path_fixture() -> SourceSinkGraph:
    """Two adjacent sources, each with one sink."""
    return SourceSinkGraph([[1], [0]], np.array([1, 1]))


def balayage(seeds: int = 20, ns=None, seed: int = 3) -> list[VerificationReport]:
    """Matrix route equals the Dirichlet deposit; spectral radius below one."""
    rng = np.random.default_rng(seed)
    worst_rel, worst_rho_gap, max_rho = 0.0, 0.0, 0.0
    rho_ok = True
    for _ in range(seeds):
        V = random_visited(rng, int(rng.integers(5, 16)))
        g = SourceSinkGraph.from_visited(V)
        tm = transfer_matrices(g)
        mu = rng.random(g.N) * (rng.random(g.N) < 0.5)
        if not mu.any():
            mu[0] = 1.0
        per_sink = sink_distribution(tm, mu)
        origin = np.array(V.grid.origin)
        rho = Grid(np.zeros(V.mask.shape), V.grid.origin)
        for p, m in zip(g.points, mu):
            rho[p] = m
        dep = dirichlet_solve(V, rho).deposit
        mat = np.zeros(V.mask.shape)
        for i, sinks in enumerate(g.sink_edges):
            for q in sinks:
                mat[tuple(np.array(q) + origin)] += per_sink[i]
        bnd = V.boundary_mask
        scale = np.maximum(np.abs(dep.data[bnd]), 1e-300)
        rel = np.abs(mat[bnd] - dep.data[bnd])
        rel = np.where(np.abs(dep.data[bnd]) > 1e-14 * mu.sum(), rel / scale, rel / mu.sum())
        worst_rel = max(worst_rel, float(rel.max()))
        est = spectral_radius(tm.M)
        exact = float(np.abs(np.linalg.eigvals(tm.M)).max())
        worst_rho_gap = max(worst_rho_gap, abs(est.rho - exact))
        max_rho = max(max_rho, exact)
        rho_ok &= est.converged and exact < 1
    tm = transfer_matrices(path_fixture())
    fx = sink_distribution(tm, [1.0, 0.0])
    fx_err = float(np.abs(fx - np.array([2 / 3, 1 / 3])).max())
    prho = spectral_radius(tm.M).rho
    return [
        VerificationReport("balayage_equivalence", {"instances": seeds, "seed": seed}, worst_rel, None, 1e-9,
                           worst_rel <= 1e-9, seeds),
        VerificationReport("path_fixture", {}, fx_err, None, 1e-12, fx_err <= 1e-12, 1,
                           {"per_sink": fx.tolist()}),
        VerificationReport("spectral_radius", {"instances": seeds}, worst_rho_gap, None, 1e-6,
                           rho_ok and worst_rho_gap <= 1e-6 and abs(prho - 0.25) <= 1e-9, seeds + 1,
                           {"max_rho": max_rho, "path_rho": prho}),
    ]


_RUN_CACHE: dict = {}


def point_run(n: float, d: int = 2):
    """Cached point-mass run with capacity n^(1/d)."""
    key = (float(n), d)
    if key not in _RUN_CACHE:
        _RUN_CACHE[key] = stabilize_fast({(0,) * d: float(n)}, float(n) ** (1.0 / d), d)
    return _RUN_CACHE[key]


_ASM_CACHE: dict = {}


def asm_run(n: int, d: int = 2):
    key = (int(n), d)
    if key not in _ASM_CACHE:
        _ASM_CACHE[key] = stabilize_asm({(0,) * d: int(n)})
    return _ASM_CACHE[key]


def symmetry(seeds=None, ns=(1000, 10000)) -> list[VerificationReport]:
    return [verify_symmetry(point_run(n)) for n in ns]


def monotonicity(seeds=None, ns=(1000, 10000)) -> list[VerificationReport]:
    out = [verify_monotonicity(point_run(n), tol=1e-8 * n, n=n) for n in ns]
    out += [verify_monotonicity(asm_run(n), tol=0.0, n=n) for n in ns]
    return out


def growth(seeds=None, ns=(1000, 10000)) -> list[VerificationReport]:
    return [verify_growth([point_run(n) for n in ns])]


def lipschitz(seeds=None, ns=(1000, 10000)) -> list[VerificationReport]:
    return [verify_lipschitz([point_run(n) for n in ns], r0=0.2)]


def lower_bound(seeds=None, ns=(1000, 10000)) -> list[VerificationReport]:
    return [verify_lower_bound([point_run(n) for n in ns], r0=0.2)]


def asm(seeds: int = 20, ns=(1000, 10000)) -> list[VerificationReport]:
    out = []
    for n in ns:
        a = asm_run(n)
        top = int(a.chips.data.max())
        out.append(VerificationReport("asm_heights", {"n": n}, float(top), None, 2 * a.d - 1,
                                      top <= 2 * a.d - 1, int(a.chips.data.size)))
        out.append(verify_asm_least_action(a, trials=max(seeds or 0, 20)))
        out.append(verify_simply_connected(a))
        out.append(boundary_cone_check(a))
    return out


SUITES = {
    "abelian": abelian,
    "oracle": oracle,
    "balayage": balayage,
    "symmetry": symmetry,
    "monotonicity": monotonicity,
    "growth": growth,
    "lipschitz": lipschitz,
    "lower-bound": lower_bound,
    "asm": asm,
}
