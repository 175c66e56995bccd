"""Empirical checks of structural properties on computed states.

Every check returns a :class:`VerificationReport`.  States may be boundary
sandpile results (anything with ``visited``, ``odometer`` and ``mu0``) or
ASM :class:`~bsandpile.dynamics.ChipState` objects.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba as nb
import numpy as np
from scipy import ndimage

from .dynamics import ChipState
from .lattice import Grid, VisitedSet, laplacian_array, neighbor_sum
from .report import VerificationReport

__all__ = [
    "DirectionSet", "VerificationReport", "verify_symmetry", "verify_monotonicity", "verify_growth",
    "verify_lipschitz", "verify_lower_bound", "verify_asm_least_action", "verify_simply_connected",
    "verify_no_touch", "growth_radii", "factor_band",
]


@dataclass(frozen=True)
class DirectionSet:
    """The lattice directions e_i and e_i ± e_j (i < j); one normal per reflection hyperplane."""

    d: int

    @property
    def vectors(self) -> list[tuple[int, ...]]:
        out = []
        for i in range(self.d):
            e = [0] * self.d
            e[i] = 1
            out.append(tuple(e))
        for i, j in itertools.combinations(range(self.d), 2):
            for s in (1, -1):
                e = [0] * self.d
                e[i] = 1
                e[j] = s
                out.append(tuple(e))
        return out

    def __len__(self) -> int:
        return self.d * self.d

    def __iter__(self):
        return iter(self.vectors)


def reflect(a: np.ndarray, e: Sequence[int]) -> np.ndarray:
    """Reflect an array on a symmetric cube across the hyperplane orthogonal to ``e``."""
    nz = [i for i, c in enumerate(e) if c]
    if len(nz) == 1:
        return np.flip(a, nz[0])
    i, j = nz
    out = np.swapaxes(a, i, j)
    if e[i] == e[j]:
        # x_i -> -x_j, x_j -> -x_i
        out = np.flip(np.flip(out, i), j)
    return out


def _fields(state):
    """(visited, odometer, initial field) of a BS or ASM state."""
    if isinstance(state, ChipState):
        return state.visited, state.odometer, state.chips0
    return state.visited, state.odometer, state.mu0


def _is_point_mass(g: Grid) -> bool:
    pts = g.points()
    return len(pts) == 1 and not any(pts[0])


def _n_of(state) -> float:
    return float(_fields(state)[2].data.sum())


def _cube(*grids) -> tuple[int, list[np.ndarray]]:
    r = max(g.symmetric_radius() for g in grids)
    return r, [g.embed(r).data for g in grids]


def verify_symmetry(state, directions: DirectionSet | None = None, tol: float | None = None) -> VerificationReport:
    """V and u are invariant under every lattice reflection fixing the origin."""
    V, u, mu0 = _fields(state)
    d = V.d
    directions = directions or DirectionSet(d)
    if not _is_point_mass(mu0):
        return VerificationReport.skip("symmetry", "initial field is not a point mass at the origin")
    n = _n_of(state)
    tol = 1e-8 * n if tol is None else tol
    r, (vm, uu) = _cube(V.grid, u)
    worst, where, set_ok = 0.0, None, True
    per = {}
    for e in directions:
        same = bool(np.array_equal(reflect(vm, e), vm))
        diff = np.abs(reflect(uu, e).astype(np.float64) - uu)
        k = int(np.argmax(diff))
        per[str(e)] = {"set_equal": same, "max_diff": float(diff.ravel()[k])}
        set_ok &= same
        if diff.ravel()[k] > worst or where is None:
            worst = float(diff.ravel()[k])
            where = [int(i) - r for i in np.unravel_index(k, diff.shape)]
    return VerificationReport("symmetry", {"n": n, "d": d}, worst, where, tol,
                              set_ok and worst <= tol, len(directions) * vm.size, per)


# ---------------------------------------------------------------------------
# directional monotonicity
# ---------------------------------------------------------------------------

@nb.njit(cache=True)
def _monotone_scan(u, shape, origin, e, tol):
    """Scan every lattice line parallel to ``e`` through the box.

    Along a line the squared norm is a convex quadratic of the step, so
    the points sorted by norm are a merge of two monotone runs.  Returns
    (worst excess, flat index of the worse point, pairs checked, flat
    index of a strictness tie or -1, number of ties).
    """
    d = shape.size
    N = u.size
    strides = np.ones(d, np.int64)
    for a in range(d - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    step = 0
    for a in range(d):
        step += e[a] * strides[a]
    L = 0
    for a in range(d):
        if shape[a] > L:
            L = shape[a]
    vals = np.empty(L)
    nrm = np.empty(L, np.int64)
    idx = np.empty(L, np.int64)
    order = np.empty(L, np.int64)
    c = np.empty(d, np.int64)
    worst = -np.inf
    worst_at = -1
    checked = 0
    ties = 0
    tie_at = -1
    for k in range(N):
        rem = k
        for a in range(d):
            c[a] = rem // strides[a]
            rem -= c[a] * strides[a]
        # line start: predecessor outside the box
        start = False
        for a in range(d):
            p = c[a] - e[a]
            if p < 0 or p >= shape[a]:
                start = True
        if not start:
            continue
        m = 0
        j = k
        inside = True
        while inside:
            s2 = 0
            for a in range(d):
                x = c[a] + m * e[a] - origin[a]
                s2 += x * x
            vals[m] = u[j]
            nrm[m] = s2
            idx[m] = j
            m += 1
            for a in range(d):
                p = c[a] + m * e[a]
                if p < 0 or p >= shape[a]:
                    inside = False
            j += step
        # argmin of the convex sequence, then merge both sides outward
        t = 0
        for i in range(1, m):
            if nrm[i] < nrm[t]:
                t = i
        lo = t - 1
        hi = t + 1
        order[0] = t
        q = 1
        while lo >= 0 or hi < m:
            if hi >= m or (lo >= 0 and nrm[lo] <= nrm[hi]):
                order[q] = lo
                lo -= 1
            else:
                order[q] = hi
                hi += 1
            q += 1
        # running minimum over all points of norm <= current norm (ties included)
        g0 = 0
        runmin = np.inf
        prev_min = np.inf
        while g0 < m:
            g1 = g0
            gmin = np.inf
            while g1 < m and nrm[order[g1]] == nrm[order[g0]]:
                if vals[order[g1]] < gmin:
                    gmin = vals[order[g1]]
                g1 += 1
            prev_min = runmin
            if gmin < runmin:
                runmin = gmin
            for i in range(g0, g1):
                v = vals[order[i]]
                checked += 1
                ex = v - runmin
                if ex > worst:
                    worst = ex
                    worst_at = idx[order[i]]
                # strictness: positive value equal to a value at smaller norm
                if v > 0 and prev_min < np.inf and abs(v - prev_min) <= tol:
                    ties += 1
                    tie_at = idx[order[i]]
            g0 = g1
    return worst, worst_at, checked, tie_at, ties


def verify_monotonicity(u, directions: DirectionSet | None = None, tol: float = 0.0,
                        n: float | None = None) -> VerificationReport:
    """u(X1) >= u(X2) - tol whenever X1 - X2 is parallel to a lattice direction and |X1| <= |X2|.

    Exhaustive over the bounding box; the strictness of the inequality on
    the support is reported as a diagnostic only.
    """
    if isinstance(u, ChipState) or hasattr(u, "odometer"):
        u = u.odometer
    d = u.d
    directions = directions or DirectionSet(d)
    data = np.ascontiguousarray(u.data, dtype=np.float64).ravel()
    shape = np.array(u.shape, np.int64)
    origin = np.array(u.origin, np.int64)
    worst, where, checked, ties = 0.0, None, 0, 0
    per = {}
    for e in directions:
        w, at, c, tie_at, t = _monotone_scan(data, shape, origin, np.array(e, np.int64), tol)
        per[str(e)] = {"worst": float(w), "ties": int(t)}
        checked += c
        ties += t
        if w > worst:
            worst = float(w)
            where = [int(i) - o for i, o in zip(np.unravel_index(at, u.shape), u.origin)]
    return VerificationReport("monotonicity", {"d": d, "n": n}, worst, where, tol, worst <= tol, checked,
                              {"per_direction": per, "strictness_ties": ties})


# ---------------------------------------------------------------------------
# growth, gradient and lower bounds
# ---------------------------------------------------------------------------

def factor_band(values: Sequence[float], factor: float = 2.0) -> tuple[bool, float]:
    """All values within [median / factor, factor * median]?  Returns (ok, median)."""
    v = np.asarray(values, dtype=float)
    med = float(np.median(v))
    ok = bool(np.all(v >= med / factor) and np.all(v <= med * factor) and med > 0)
    return ok, med


def growth_radii(V: VisitedSet) -> tuple[float, float]:
    """(r_in, r_out): sup{R : Z_R ⊆ V} and min{R : V ⊆ Z_R}.

    Z_R ⊆ V exactly when every |x| <= R lies in the interior of V, so r_in
    is the least norm of a non-interior point.  A point x lies in Z_R
    exactly when R >= min(|x|, min over neighbours |y|).
    """
    r = V.grid.symmetric_radius() + 1
    Vr = V.embed(r)
    n2 = Vr.grid.norm2().astype(np.float64)
    inner = Vr.interior_mask
    r_in = math.sqrt(float(n2[~inner].min()))
    big = np.pad(n2, 1, constant_values=np.inf)
    reach = n2.copy()
    core = (slice(1, -1),) * V.d
    for ax in range(V.d):
        for s in (1, -1):
            reach = np.minimum(reach, np.roll(big, s, axis=ax)[core])
    r_out = math.sqrt(float(reach[Vr.mask].max()))
    return r_in, r_out


def verify_growth(runs: Sequence, factor: float = 2.0) -> VerificationReport:
    """Radii ratios r/n^(1/d) stay in a factor band; visited sets are nested in n."""
    runs = sorted(runs, key=_n_of)
    rows = []
    for s in runs:
        n = _n_of(s)
        V = _fields(s)[0]
        r_in, r_out = growth_radii(V)
        k = n ** (1.0 / V.d)
        rows.append({"n": n, "r_in": r_in, "r_out": r_out, "in_ratio": r_in / k, "out_ratio": r_out / k})
    ok_in, med_in = factor_band([r["in_ratio"] for r in rows], factor)
    ok_out, med_out = factor_band([r["out_ratio"] for r in rows], factor)
    nested_fail = []
    for a, b in zip(runs, runs[1:]):
        if not _fields(a)[0].issubset(_fields(b)[0]):
            nested_fail.append([_n_of(a), _n_of(b)])
    passed = ok_in and ok_out and not nested_fail
    worst = max(max(r["in_ratio"] / med_in, med_in / r["in_ratio"], r["out_ratio"] / med_out,
                    med_out / r["out_ratio"]) for r in rows)
    return VerificationReport("growth", {"factor": factor}, worst, nested_fail or None, factor, passed,
                              len(rows), {"runs": rows, "median_in": med_in, "median_out": med_out})


def lipschitz_constant(u: Grid, n: float, r0: float) -> float:
    """max |u(x) - u(y)| over neighbour pairs with |x|, |y| > r0 n^(1/d), divided by n^(1/d)."""
    d = u.d
    k = n ** (1.0 / d)
    data = np.pad(u.data.astype(np.float64), 1)
    n2 = np.pad(u.norm2(), 1, constant_values=np.iinfo(np.int64).max // 4)
    far = n2 > (r0 * k) ** 2
    best = 0.0
    for ax in range(d):
        a = [slice(None)] * d
        b = [slice(None)] * d
        a[ax] = slice(0, -1)
        b[ax] = slice(1, None)
        diff = np.abs(data[tuple(a)] - data[tuple(b)])
        ok = far[tuple(a)] & far[tuple(b)]
        if ok.any():
            best = max(best, float(diff[ok].max()))
    return best / k


def verify_lipschitz(runs: Sequence, r0: float = 0.2, factor: float = 2.0) -> VerificationReport:
    """Normalized gradient maxima away from the origin stay within a factor band across n."""
    rows = []
    for s in runs:
        n = _n_of(s)
        rows.append({"n": n, "L": lipschitz_constant(_fields(s)[1], n, r0)})
    ok, med = factor_band([r["L"] for r in rows], factor)
    worst = max(max(r["L"] / med, med / r["L"]) if med > 0 else math.inf for r in rows)
    return VerificationReport("lipschitz", {"r0": r0, "factor": factor}, worst, None, factor, ok,
                              len(rows), {"runs": rows, "median": med})


def interior_minimum(state, r0: float) -> tuple[float, list | None, int]:
    """min of u over sites at Euclidean distance >= r0 n^(1/d) from ∂V, divided by n^(2/d)."""
    V, u, mu0 = _fields(state)
    n = float(mu0.data.sum())
    d = V.d
    r = max(V.grid.symmetric_radius(), u.symmetric_radius())
    Vr = V.embed(r)
    uu = u.embed(r).data.astype(np.float64)
    dist = ndimage.distance_transform_edt(~Vr.boundary_mask)
    ok = Vr.interior_mask & (dist >= r0 * n ** (1.0 / d))
    if not ok.any():
        return math.nan, None, 0
    vals = np.where(ok, uu, np.inf)
    k = int(np.argmin(vals))
    loc = [int(i) - r for i in np.unravel_index(k, vals.shape)]
    return float(vals.ravel()[k]) / n ** (2.0 / d), loc, int(ok.sum())


def verify_lower_bound(runs: Sequence, r0: float = 0.2, factor: float = 2.0) -> VerificationReport:
    """Normalized interior minima are positive and within a factor band across n."""
    rows = []
    for s in runs:
        m, loc, cnt = interior_minimum(s, r0)
        rows.append({"n": _n_of(s), "m": m, "location": loc, "sites": cnt})
    vals = [r["m"] for r in rows if not math.isnan(r["m"])]
    if not vals:
        return VerificationReport.skip("lower_bound", "no site far enough from the boundary", r0=r0)
    ok, med = factor_band(vals, factor)
    ok = ok and min(vals) > 0 and len(vals) == len(rows)
    worst = max(max(v / med, med / v) if v > 0 else math.inf for v in vals)
    return VerificationReport("lower_bound", {"r0": r0, "factor": factor}, worst, None, factor, ok,
                              len(rows), {"runs": rows, "median": med})


def verify_no_touch(state, radii: Iterable[float], capacity: float) -> VerificationReport:
    """A ball whose scaled boundary Laplacian exceeds the capacity keeps its boundary off ∂V."""
    from .potential import greens_function

    V, _, mu0 = _fields(state)
    n = float(mu0.data.sum())
    bset = set(V.boundary())
    checked, bad = 0, []
    for R in radii:
        g = greens_function(R, V.d)
        if n * g.boundary_samples().min() <= capacity:
            continue
        checked += 1
        touch = bset.intersection(g.ball.boundary())
        if touch:
            bad.append({"R": R, "touching": sorted(touch)[:5]})
    return VerificationReport("no_touch", {"n": n, "capacity": capacity}, float(len(bad)), bad or None, 0.0,
                              not bad, checked)


# ---------------------------------------------------------------------------
# abelian sandpile
# ---------------------------------------------------------------------------

def _asm_chips(chips0: np.ndarray, w: np.ndarray) -> np.ndarray:
    """chips0 + 2d Δw with integer arithmetic (w zero outside the array)."""
    d = w.ndim
    return chips0 + neighbor_sum(w).astype(np.int64) - 2 * d * w


def verify_asm_least_action(chips0, u=None, trials: int = 200, seed: int = 0) -> VerificationReport:
    """The ASM odometer is the least w >= 0 with chips0 + 2dΔw <= 2d - 1.

    (a) u itself satisfies the constraint; (b) every single-site decrement
    of u violates it; (c) ``trials`` random decrements w = u - δ with
    0 <= δ <= u, δ != 0 (random subsets of the support and of level sets)
    violate it as well.
    """
    if isinstance(chips0, ChipState):
        state = chips0
        chips0, u = state.chips0, state.odometer
    d = u.d
    r = max(u.symmetric_radius(), chips0.symmetric_radius()) + 1
    uu = u.embed(r).data.astype(np.int64)
    c0 = chips0.embed(r).data.astype(np.int64)
    top = 2 * d - 1
    base = _asm_chips(c0, uu)
    if base.max() > top or uu.min() < 0:
        k = int(np.argmax(base))
        return VerificationReport("asm_least_action", {"d": d}, float(base.max() - top),
                                  [int(i) - r for i in np.unravel_index(k, base.shape)], 0.0, False, 1,
                                  {"failed": "odometer does not satisfy the constraint"})
    support = np.argwhere(uu > 0)
    admissible = []
    # single-site decrement at x raises the chips at x by 2d, so it always breaks the bound;
    # check explicitly anyway
    for p in map(tuple, support):
        if base[p] + 2 * d <= top:
            admissible.append([int(i) - r for i in p])
    rng = np.random.default_rng(seed)
    levels = np.unique(uu[uu > 0])
    for t in range(trials if len(support) else 0):
        if t % 2 == 0:
            delta = (rng.random(uu.shape) < rng.uniform(0.01, 1.0)) & (uu > 0)
        else:
            k = levels[rng.integers(len(levels))]
            delta = uu >= k
            if rng.random() < 0.5:
                delta &= rng.random(uu.shape) < 0.5
        if not delta.any():
            continue
        w = uu - delta.astype(np.int64)
        if _asm_chips(c0, w).max() <= top:
            admissible.append({"trial": t, "size": int(delta.sum())})
    n = int(c0.sum())
    return VerificationReport("asm_least_action", {"n": n, "d": d, "trials": trials, "seed": seed},
                              float(len(admissible)), admissible[:5] or None, 0.0, not admissible,
                              len(support) + trials)


def verify_simply_connected(V) -> VerificationReport:
    """The complement of V inside a padded box is a single lattice-connected component."""
    if isinstance(V, ChipState) or hasattr(V, "visited"):
        V = V.visited
    outside = np.pad(~V.mask, 1, constant_values=True)
    st = ndimage.generate_binary_structure(V.d, 1)
    _, k = ndimage.label(outside, structure=st)
    return VerificationReport("simply_connected", {"size": len(V)}, float(k - 1), None, 0.0, k == 1,
                              int(outside.sum()))
