"""Rescaled odometers u_h(x) = h^2 u_n(x / h) with h = n^(-1/d), their cube
extensions, cross-n comparisons and cone checks of the free boundary."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ChipState
from .lattice import Grid, VisitedSet
from .report import VerificationReport


@dataclass
class ScaledOdometer:
    """Odometer of a run with total mass ``n`` viewed on the lattice h·Z^d.

    The raw odometer is kept untouched; scaled values are computed on
    demand, so :meth:`unscaled` returns the original array itself.
    """

    raw: Grid
    n: float

    @property
    def d(self) -> int:
        return self.raw.d

    @property
    def h(self) -> float:
        return self.n ** (-1.0 / self.d)

    @property
    def values(self) -> np.ndarray:
        return self.raw.data.astype(np.float64) * self.h ** 2

    def unscaled(self) -> Grid:
        return self.raw

    def at(self, xi) -> float:
        """u_h at the lattice point h·xi (xi integer)."""
        return float(self.raw[xi]) * self.h ** 2

    def support_radius(self) -> float:
        pts = np.argwhere(self.raw.data > 0)
        if not len(pts):
            return 0.0
        return float(np.sqrt(((pts - np.array(self.raw.origin)) ** 2).sum(1).max())) * self.h

    def cube(self) -> "CubeExtension":
        return CubeExtension(self)


def scaled_odometer(u, n: float | None = None) -> ScaledOdometer:
    """Wrap an odometer (Grid, BS result or ChipState) with its mass ``n``."""
    if isinstance(u, ChipState):
        n = u.n if n is None else n
        u = u.odometer
    elif hasattr(u, "odometer"):
        n = u.n if n is None else n
        u = u.odometer
    if n is None or n <= 0:
        raise ValueError("total mass n must be positive")
    return ScaledOdometer(u, float(n))


@dataclass
class CubeExtension:
    """Piecewise-constant extension: constant on each half-open cube hξ + [-h/2, h/2)^d."""

    s: ScaledOdometer

    def cell(self, x: np.ndarray) -> np.ndarray:
        """Lattice index ξ of the cube containing each point (last axis = coordinates)."""
        return np.floor(np.asarray(x, dtype=float) / self.s.h + 0.5).astype(np.int64)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        xi = self.cell(x)
        idx = xi + np.array(self.s.raw.origin)
        shape = np.array(self.s.raw.shape)
        inside = np.all((idx >= 0) & (idx < shape), axis=-1)
        out = np.zeros(xi.shape[:-1])
        flat = idx[inside]
        out[inside] = self.s.raw.data[tuple(flat.T)] * self.s.h ** 2
        return out

    def raster(self, spacing: float, extent: float) -> tuple[np.ndarray, np.ndarray]:
        """Sample on the grid spacing·Z^d ∩ [-extent, extent]^d; returns (points, values)."""
        k = int(math.floor(extent / spacing))
        ax = np.arange(-k, k + 1) * spacing
        mesh = np.stack(np.meshgrid(*([ax] * self.s.d), indexing="ij"), axis=-1)
        return mesh, self(mesh)


def compare_scaled(a: ScaledOdometer, b: ScaledOdometer, rho: float = 0.2) -> float:
    """sup over |x| > rho of the difference of the two cube extensions.

    Evaluated on the coarser of the two lattices; the finer field is read
    through its cube extension.
    """
    if a.d != b.d:
        raise ValueError("dimension mismatch")
    coarse, fine = (a, b) if a.h >= b.h else (b, a)
    extent = max(a.support_radius(), b.support_radius()) + 2 * coarse.h
    k = int(math.ceil(extent / coarse.h))
    r = max(k, coarse.raw.symmetric_radius())
    cvals = coarse.raw.embed(r).data.astype(np.float64) * coarse.h ** 2
    ax = np.arange(-r, r + 1) * coarse.h
    mesh = np.stack(np.meshgrid(*([ax] * a.d), indexing="ij"), axis=-1)
    fvals = CubeExtension(fine)(mesh)
    far = (mesh ** 2).sum(-1) > rho ** 2
    if not far.any():
        return 0.0
    return float(np.abs(cvals - fvals)[far].max())


# ---------------------------------------------------------------------------
# cone check of the free boundary
# ---------------------------------------------------------------------------

def cone_generators(x0) -> list[np.ndarray]:
    """Direction family for a point with coordinates >= 0 and the last one largest.

    Always e_d; for each i < d: e_d ± e_i when x_d >= 2 x_i, and e_i when
    x_d <= 3 x_i.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.size
    eye = np.eye(d)
    gens = [eye[d - 1]]
    for i in range(d - 1):
        if x0[d - 1] >= 2 * x0[i]:
            gens += [eye[d - 1] + eye[i], eye[d - 1] - eye[i]]
        if x0[d - 1] <= 3 * x0[i]:
            gens.append(eye[i])
    return gens


def cone_facets(gens) -> np.ndarray:
    """Inward facet normals of the cone generated by ``gens`` (rows)."""
    G = np.array(gens, dtype=float)
    d = G.shape[1]
    normals = []
    for sub in itertools.combinations(range(len(G)), d - 1):
        A = G[list(sub)]
        if d > 1 and np.linalg.matrix_rank(A) < d - 1:
            continue
        nvec = np.linalg.svd(A)[2][-1] if d > 1 else np.ones(1)
        dots = G @ nvec
        if np.all(dots >= -1e-12):
            normals.append(nvec)
        elif np.all(dots <= 1e-12):
            normals.append(-nvec)
    if not normals:
        return np.zeros((0, d))
    N = np.round(np.array(normals), 12)
    return np.unique(N, axis=0)


def boundary_cone_check(V, height: float | None = None, slack: int = 1) -> VerificationReport:
    """Double-cone condition at every boundary point of a symmetric visited set.

    For a boundary cell x0 (oriented so its coordinates are >= 0 with the
    last one largest) let C_V be the cone generated by the direction family
    and C_0 the intersection of the open half-spaces {x·v > 0}.  No visited
    cell may lie in (x0 + C_V) ∩ C_0 and no unvisited cell in
    (x0 - C_V) ∩ C_0.  A cell y counts as inside a cone only if the whole
    box y + [-slack, slack]^d is; cells are examined within ``height``
    (default: a quarter of the set's radius) of x0.
    """
    if isinstance(V, ChipState) or hasattr(V, "visited"):
        V = V.visited
    d = V.d
    r = V.grid.symmetric_radius() + 2
    Vr = V.embed(r)
    mask = Vr.mask
    pts = np.argwhere(mask) - r
    radius = float(np.sqrt((pts ** 2).sum(1).max())) if len(pts) else 0.0
    height = max(2.0, 0.25 * radius) if height is None else height
    H = int(math.ceil(height)) + slack
    offs = np.array(list(itertools.product(range(-H, H + 1), repeat=d)))
    offs = offs[(offs ** 2).sum(1) <= height ** 2]
    corners = np.array(list(itertools.product((-slack, slack), repeat=d)))
    bnd = np.argwhere(Vr.boundary_mask) - r
    violations, worst_at, examined = 0, None, 0
    for x0 in bnd:
        sign = np.where(x0 < 0, -1, 1)
        a = np.abs(x0)
        perm = np.argsort(a, kind="stable")  # largest coordinate last
        o = a[perm]
        gens = cone_generators(o)
        F = cone_facets(gens)
        G = np.array(gens)
        # world cells y = x0 + t, oriented: y'_k = sign[perm_k] * y[perm_k]
        y = x0 + offs
        yo = (y * sign)[:, perm]
        inside_box = np.all(np.abs(y) <= r, axis=1)
        cy = yo[:, None, :] + corners[None, :, :]
        in_c0 = np.all(np.einsum("pcd,gd->pcg", cy, G) > 0, axis=(1, 2))
        rel = cy - o
        fwd = np.all(np.einsum("pcd,fd->pcf", rel, F) >= 0, axis=(1, 2))
        back = np.all(np.einsum("pcd,fd->pcf", -rel, F) >= 0, axis=(1, 2))
        ok = inside_box
        idx = tuple((y[ok] + r).T)
        member = np.zeros(len(y), bool)
        member[ok] = mask[idx]
        bad_out = in_c0 & fwd & member
        bad_in = in_c0 & back & ~member
        examined += int((in_c0 & (fwd | back)).sum())
        nb = int(bad_out.sum() + bad_in.sum())
        if nb:
            violations += nb
            if worst_at is None:
                worst_at = [int(c) for c in x0]
    return VerificationReport("boundary_cone", {"height": height, "slack": slack, "size": len(V)},
                              float(violations), worst_at, 0.0, violations == 0, examined,
                              {"boundary_points": int(len(bnd))})
