"""Green's functions of discrete balls and their boundary Laplacian."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .balayage import dirichlet_solve
from .lattice import DiscreteBall, Grid, VisitedSet, discrete_ball

R0_DEFAULT = 5.0


@dataclass
class GreensFunction:
    """G_R on Z_R with pole at the origin; ``boundary_laplacian`` holds ΔG_R on ∂Z_R."""

    R: float
    d: int
    values: Grid
    ball: DiscreteBall
    boundary_laplacian: Grid
    residual: float = 0.0

    def at(self, x) -> float:
        return float(self.values[x])

    def boundary_samples(self) -> np.ndarray:
        return self.boundary_laplacian.data[self.ball.boundary_mask]


def greens_function(R: float, d: int = 2, method: str = "direct") -> GreensFunction:
    """Solve ΔG = -δ0 on the interior of Z_R with G = 0 on ∂Z_R."""
    ball = discrete_ball(R, d)
    sol = dirichlet_solve(ball, {(0,) * d: 1.0}, method=method)
    return GreensFunction(R, d, sol.w, ball, sol.deposit, sol.residual)


def greens_on(V: VisitedSet, pole=None, method: str = "direct") -> Grid:
    """Green's function of an arbitrary visited set with pole ``pole`` (default origin)."""
    pole = tuple(pole) if pole is not None else (0,) * V.d
    return dirichlet_solve(V, {pole: 1.0}, method=method).w


@dataclass
class BoundaryBounds:
    R: float
    d: int
    min: float
    max: float
    min_normalized: float
    max_normalized: float

    def row(self) -> list:
        return [self.R, self.d, self.min, self.max, self.min_normalized, self.max_normalized]


CSV_HEADER = ["R", "d", "min", "max", "min_normalized", "max_normalized"]


def boundary_laplacian_bounds(g: GreensFunction, R0: float = R0_DEFAULT) -> BoundaryBounds:
    """Extremes of ΔG_R over ∂Z_R, raw and multiplied by R^(d-1)."""
    if g.R < R0:
        raise ValueError(f"R={g.R} is below the threshold R0={R0}")
    s = g.boundary_samples()
    scale = g.R ** (g.d - 1)
    return BoundaryBounds(g.R, g.d, float(s.min()), float(s.max()), float(s.min() * scale),
                          float(s.max() * scale))


def bounds_table(radii: Iterable[float], d: int = 2, R0: float = R0_DEFAULT) -> list[BoundaryBounds]:
    return [boundary_laplacian_bounds(greens_function(R, d), R0) for R in radii]


def write_bounds_csv(rows: Sequence[BoundaryBounds], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.row()])


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def leading_asymptotic(x, d: int | None = None) -> float:
    """Leading term of the lattice Green's function far from the pole.

    -(2/π) log|x| in d = 2 and 2 / ((d-2) ω_d) |x|^(2-d) for d >= 3, where
    ω_d is the volume of the unit ball.  Additive constants are omitted.
    """
    x = np.asarray(x, dtype=float)
    d = d or x.size
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise ValueError("the asymptotic form has a pole at the origin")
    if d == 2:
        return -2.0 / math.pi * math.log(r)
    return 2.0 / ((d - 2) * unit_ball_volume(d)) * r ** (2 - d)


def fit_gamma0(radii: Iterable[float] = range(10, 41)) -> float:
    """Least-squares constant in G_R(0) ≈ (2/π) log R + γ0 (d = 2)."""
    res = [greens_function(R, 2).at((0, 0)) - 2.0 / math.pi * math.log(R) for R in radii]
    return float(np.mean(res))
