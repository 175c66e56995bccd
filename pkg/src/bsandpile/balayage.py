"""Moving mass from source vertices to sinks in one step.

Two routes compute the same thing:

* the matrix route: bookkeeping of one sweep of topplings over the sources
  gives a mass-transformation matrix ``M`` and a mass-distribution matrix
  ``D``; summing the Neumann series gives ``D (I - M)^-1 mu``;
* the Dirichlet route: solve ``Δw = -rho`` on the interior of a visited
  set with ``w = 0`` on its boundary; ``Δw`` on the boundary is what each
  boundary site receives.
"""
from __future__ import annotations

import warnings

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numba as nb
import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import Grid, VisitedSet, flat_offsets, laplacian_array

DENSE_LIMIT = 2000


class SingularSystem(np.linalg.LinAlgError):
    """I - M is numerically singular: some source cannot reach a sink."""


@dataclass
class SourceSinkGraph:
    """Sources ``0..N-1`` with adjacency among sources and sink attachments.

    ``degree[i]`` counts every neighbour of source ``i``, sources and sinks
    alike; ``sinks[i]`` is the number of sinks attached to it.
    """

    adjacency: list[list[int]]
    sinks: np.ndarray
    degree: np.ndarray = None
    points: list | None = None
    sink_edges: list[list] | None = None   # per source: sink labels it feeds

    def __post_init__(self):
        self.sinks = np.asarray(self.sinks, dtype=np.int64)
        if self.degree is None:
            self.degree = np.array([len(a) for a in self.adjacency]) + self.sinks
        self.degree = np.asarray(self.degree, dtype=np.int64)
        self.validate()

    @property
    def N(self) -> int:
        return len(self.adjacency)

    def validate(self) -> None:
        N = self.N
        if N == 0:
            raise ValueError("graph has no source vertices")
        if self.sinks.sum() == 0:
            raise ValueError("graph has no sink vertices")
        if np.any(self.degree < 1):
            raise ValueError("every source needs positive degree")
        for i, nbrs in enumerate(self.adjacency):
            if i in nbrs or len(set(nbrs)) != len(nbrs):
                raise ValueError("graph must be simple")
            for j in nbrs:
                if i not in self.adjacency[j]:
                    raise ValueError("adjacency must be symmetric")
            if len(nbrs) + self.sinks[i] != self.degree[i]:
                raise ValueError("degree must equal source neighbours plus sinks")
        # every source must reach a sink, otherwise mass is trapped
        reach = self.sinks > 0
        stack = list(np.flatnonzero(reach))
        while stack:
            i = stack.pop()
            for j in self.adjacency[i]:
                if not reach[j]:
                    reach[j] = True
                    stack.append(j)
        if not reach.all():
            raise ValueError("some source vertices cannot reach a sink")

    @classmethod
    def from_visited(cls, V: VisitedSet, mask: np.ndarray | None = None) -> "SourceSinkGraph":
        """Lattice graph on the interior of ``V``; boundary sites act as sinks."""
        member = V.mask if mask is None else mask
        inner = V.interior_mask & member
        origin = np.array(V.grid.origin)
        pts = np.argwhere(inner)
        index = {tuple(p): i for i, p in enumerate(map(tuple, pts))}
        d = V.d
        adjacency, sinks, sink_edges = [], [], []
        for p in map(tuple, pts):
            nb_src, nb_sink = [], []
            for ax in range(d):
                for s in (1, -1):
                    q = list(p)
                    q[ax] += s
                    q = tuple(q)
                    if q in index:
                        nb_src.append(index[q])
                    else:
                        nb_sink.append(tuple(int(c) for c in np.array(q) - origin))
            adjacency.append(nb_src)
            sinks.append(len(nb_sink))
            sink_edges.append(nb_sink)
        points = [tuple(int(c) for c in p - origin) for p in pts]
        return cls(adjacency, np.array(sinks), np.full(len(pts), 2 * d), points, sink_edges)


@dataclass
class TransferMatrices:
    """Mass-transformation matrix ``M`` and mass-distribution matrix ``D``."""

    M: np.ndarray
    D: np.ndarray
    graph: SourceSinkGraph | None = None
    order: list[int] | None = None


def transfer_matrices(g: SourceSinkGraph, order: Sequence[int] | None = None) -> TransferMatrices:
    """Bookkeeping of one toppling sweep over the sources.

    Sources topple once each in ``order`` (default ``0, 1, ..., N-1``).
    ``M[i, j]`` is the fraction of the initial mass at ``j`` sitting at
    ``i`` after the sweep; ``D[i, j]`` is the fraction of it that ``i``
    sent along each of its edges.
    """
    N = g.N
    order = list(range(N)) if order is None else [int(i) for i in order]
    if sorted(order) != list(range(N)):
        raise ValueError("order must be a permutation of the sources")
    M = np.eye(N)
    D = np.zeros((N, N))
    for i in order:
        share = M[i] / g.degree[i]
        D[i] += share
        for j in g.adjacency[i]:
            M[j] += share
        M[i] = 0.0
    return TransferMatrices(M, D, g, order)


def _solve_identity_minus(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    N = M.shape[0]
    A = np.eye(N) - M
    if N <= DENSE_LIMIT:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.min() <= 1e-13 * max(diag.max(), 1.0):
            raise SingularSystem("I - M is numerically singular")
        return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    x, info = spla.gmres(sp.csr_matrix(A), b, rtol=1e-14, atol=0.0, restart=200, maxiter=2000)
    if info != 0:
        raise SingularSystem(f"iterative solve of I - M failed (info={info})")
    return x


def sink_distribution(tm: TransferMatrices, mu0) -> np.ndarray:
    """``D (I - M)^-1 mu0``: component ``i`` is what each sink attached to source ``i`` gets."""
    mu0 = np.asarray(mu0, dtype=np.float64)
    if mu0.shape != (tm.M.shape[0],):
        raise ValueError("mass vector has the wrong length")
    if np.any(mu0 < 0):
        raise ValueError("mass must be nonnegative")
    if not np.any(mu0):
        return np.zeros_like(mu0)
    return tm.D @ _solve_identity_minus(tm.M, mu0)


def neumann_partial_sums(tm: TransferMatrices, mu0, k: int) -> np.ndarray:
    """``D (I + M + ... + M^(k-1)) mu0``: sink masses after ``k`` full sweeps."""
    mu = np.asarray(mu0, dtype=np.float64)
    acc = np.zeros_like(mu)
    for _ in range(k):
        acc += tm.D @ mu
        mu = tm.M @ mu
    return acc


def delivered_total(g: SourceSinkGraph, per_sink: np.ndarray) -> float:
    return float(np.dot(g.sinks, per_sink))


class SpectralEstimate(NamedTuple):
    rho: float
    converged: bool
    iterations: int


def spectral_radius(M: np.ndarray, tol: float = 1e-13, max_iter: int = 200_000) -> SpectralEstimate:
    """Power iteration for the Perron root of a nonnegative square matrix.

    Works with the l1 norm of a positive start vector.  If the plain
    iteration does not settle (periodic spectra), it is rerun on
    ``(M + I) / 2`` whose dominant eigenvalue is simple.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(M < 0):
        raise ValueError("matrix must be nonnegative")
    est = _power(M, tol, max_iter)
    if est.converged:
        return est
    shifted = _power((M + np.eye(M.shape[0])) / 2, tol / 2, max_iter)
    return SpectralEstimate(2 * shifted.rho - 1, shifted.converged, est.iterations + shifted.iterations)


def _power(M, tol, max_iter) -> SpectralEstimate:
    N = M.shape[0]
    x = np.full(N, 1.0 / N)
    lam_prev = -1.0
    for it in range(1, max_iter + 1):
        y = M @ x
        lam = y.sum()
        if lam == 0.0:
            return SpectralEstimate(0.0, True, it)
        x = y / lam
        if abs(lam - lam_prev) <= tol * lam:
            return SpectralEstimate(float(lam), True, it)
        lam_prev = lam
    return SpectralEstimate(float(lam), False, max_iter)


# ---------------------------------------------------------------------------
# Dirichlet route
# ---------------------------------------------------------------------------

@dataclass
class DirichletSolution:
    """``w`` solves Δw = -rho inside V, w = 0 on ∂V; ``deposit`` is rho + Δw on ∂V."""

    w: Grid
    deposit: Grid
    residual: float
    method: str = "direct"
    unknowns: int = 0


def _interior_system(inner: np.ndarray):
    """Sparse (2d I - adjacency) on the True cells of ``inner`` (padded array)."""
    N = int(inner.sum())
    idx = np.full(inner.shape, -1, dtype=np.int64)
    idx[inner] = np.arange(N)
    flat = idx.ravel()
    cells = np.flatnonzero(inner.ravel())
    d = inner.ndim
    rows = [np.arange(N)]
    cols = [np.arange(N)]
    vals = [np.full(N, 2.0 * d)]
    for off in flat_offsets(inner.shape):
        nb_ = flat[cells + off]
        keep = nb_ >= 0
        rows.append(np.flatnonzero(keep))
        cols.append(nb_[keep])
        vals.append(-np.ones(int(keep.sum())))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return A, cells


@nb.njit(cache=True)
def _rbgs_sweeps(w, rhs, inner, parity, offs, max_sweeps, tol, omega):
    """Red-black SOR on the flattened grid; returns (sweeps, max residual)."""
    nd = offs.size
    N = w.size
    res = 0.0
    for sweep in range(max_sweeps):
        for colour in range(2):
            for k in range(N):
                if inner[k] and parity[k] == colour:
                    s = 0.0
                    for o in offs:
                        s += w[k + o]
                    gs = (s + rhs[k]) / nd
                    w[k] += omega * (gs - w[k])
        res = 0.0
        for k in range(N):
            if inner[k]:
                s = 0.0
                for o in offs:
                    s += w[k + o]
                r = abs(s - nd * w[k] + rhs[k])
                if r > res:
                    res = r
        if res <= tol:
            return sweep + 1, res
    return max_sweeps, res


def _as_field(V: VisitedSet, rho) -> np.ndarray:
    if isinstance(rho, Grid):
        if rho.shape == V.mask.shape and rho.origin == V.grid.origin:
            return np.asarray(rho.data, dtype=np.float64)
        r = max(rho.symmetric_radius(), V.grid.symmetric_radius())
        if V.grid.lo != tuple([-r] * V.d) or V.grid.hi != tuple([r] * V.d):
            raise ValueError("source grid and visited set live on different boxes")
        return rho.embed(r).data.astype(np.float64)
    out = np.zeros(V.mask.shape)
    for p, m in dict(rho).items():
        idx = V.grid.index(p)
        if idx is None:
            raise ValueError(f"source point {p} outside the visited set")
        out[idx] = m
    return out


def solve_masked(inner: np.ndarray, src: np.ndarray, method: str = "direct", tol: float = 1e-12,
                 max_sweeps: int = 1_000_000, omega: float = 1.0) -> np.ndarray:
    """w with Δw = -src on the True cells of ``inner`` and w = 0 elsewhere.

    ``inner`` must be False on the outermost layer of the array.  The
    max-norm residual is driven below ``tol * sum(src[inner])``.
    """
    d = inner.ndim
    w = np.zeros(inner.shape)
    rho = src[inner]
    N = rho.size
    if N == 0 or not np.any(rho):
        return w
    target = tol * max(float(rho.sum()), np.finfo(float).tiny)
    if method == "rbgs":
        parity = (sum(np.indices(inner.shape)) % 2).astype(np.uint8).ravel()
        rhs = np.where(inner, 2.0 * d * src, 0.0)
        _rbgs_sweeps(w.ravel(), rhs.ravel(), inner.ravel(), parity, flat_offsets(inner.shape),
                     max_sweeps, 2 * d * target, omega)
        return w
    A, cells = _interior_system(inner)
    b = 2.0 * d * rho
    if method == "direct":
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
        x = lu.solve(b)
        for _ in range(3):
            r = b - A @ x
            if np.abs(r).max() <= 2 * d * target / 4:
                break
            x += lu.solve(r)
    elif method == "cg":
        x, info = spla.cg(A, b, rtol=0.0, atol=2 * d * target / np.sqrt(N) / 4, maxiter=50 * N)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
    else:
        raise ValueError(f"unknown method {method!r}")
    w.ravel()[cells] = x
    return w


def dirichlet_solve(V: VisitedSet, rho, method: str = "direct", tol: float = 1e-12,
                    max_sweeps: int = 1_000_000, omega: float = 1.0) -> DirichletSolution:
    """Solve Δw = -rho on the interior of V with w = 0 on ∂V and outside V.

    ``method`` is ``"direct"`` (sparse LU), ``"cg"`` (conjugate gradients)
    or ``"rbgs"`` (red-black Gauss-Seidel/SOR sweeps).  The max-norm
    residual is driven below ``tol * sum(rho)``.
    """
    src = _as_field(V, rho)
    if np.any(src[~V.mask] != 0):
        raise ValueError("source must be supported in V")
    if np.any(src < 0):
        raise ValueError("source must be nonnegative")
    d = V.d
    member = np.pad(V.mask, 1)
    inner = np.pad(V.interior_mask, 1)
    src_p = np.pad(src, 1)
    w = solve_masked(inner, src_p, method, tol, max_sweeps, omega)
    lap = laplacian_array(w)
    N = int(inner.sum())
    residual = float(np.abs((lap + src_p)[inner]).max()) if N else 0.0
    bnd = member & ~inner
    dep = np.zeros(member.shape)
    dep[bnd] = src_p[bnd] + lap[bnd]
    core = (slice(1, -1),) * d
    origin = V.grid.origin
    return DirichletSolution(Grid(w[core].copy(), origin), Grid(dep[core].copy(), origin),
                             residual, method, N)
