import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bsandpile.lattice import (Grid, VisitedSet, discrete_ball, laplacian, laplacian_array, neighbors,
                               partition)


def brute_ball(R, d):
    r = int(np.floor(R)) + 2
    core = {p for p in itertools.product(range(-r, r + 1), repeat=d) if sum(c * c for c in p) <= R * R}
    full = set(core)
    for p in core:
        full.update(neighbors(p, d))
    return core, full


def test_neighbors_order():
    assert neighbors((0, 0), 2) == [(1, 0), (-1, 0), (0, 1), (0, -1)]
    assert neighbors((2, -1), 2) == [(3, -1), (1, -1), (2, 0), (2, -2)]
    nb = neighbors((0, 0, 0), 3)
    assert len(nb) == 6 and set(nb) == {tuple(s * e for e in row) for row in np.eye(3, dtype=int) for s in (1, -1)}


def test_ball_radius_zero():
    B = discrete_ball(0, 2)
    assert B.interior() == [(0, 0)]
    assert set(B.boundary()) == set(neighbors((0, 0), 2))


def test_ball_radius_one():
    B = discrete_ball(1, 2)
    assert len(B) == 13
    assert set(B.interior()) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}
    assert set(B.boundary()) == {(1, 1), (1, -1), (-1, 1), (-1, -1), (2, 0), (-2, 0), (0, 2), (0, -2)}


def test_ball_radius_1_4_matches_enumeration():
    # |(1,1)|^2 = 2 > 1.96, so the diagonal points stay on the boundary and Z_1.4 = Z_1
    B = discrete_ball(1.4, 2)
    core, full = brute_ball(1.4, 2)
    assert set(B.interior()) == core
    assert B.as_set() == full
    assert B.as_set() == discrete_ball(1, 2).as_set()
    assert (1, 1) in set(B.boundary())


@pytest.mark.parametrize("d", [2, 3])
def test_ball_interior_bruteforce(d):
    radii = np.linspace(0, 20 if d == 2 else 8, 41)
    for R in list(radii) + [np.sqrt(2), np.sqrt(5), 2.0, 5.0]:
        core, full = brute_ball(R, d)
        B = discrete_ball(R, d)
        assert set(B.interior()) == core
        assert B.as_set() == full


def test_ball_tie_is_interior():
    # |(3,4)| = 5 exactly
    assert (3, 4) in set(discrete_ball(5, 2).interior())


def test_partition_examples():
    assert partition([(0, 0)]) == ([(0, 0)], [])
    sq = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]
    b, i = partition(sq)
    assert len(b) == 8 and i == [(0, 0)]
    b, i = partition(discrete_ball(1, 2).points())
    assert len(b) == 8 and len(i) == 5


@given(st.sets(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=40))
def test_partition_is_exhaustive(pts):
    b, i = partition(pts)
    assert set(b) | set(i) == pts
    assert not set(b) & set(i)
    V = VisitedSet.from_points(pts, 2)
    assert set(V.boundary()) == set(b) and set(V.interior()) == set(i)


def test_laplacian_examples():
    f = Grid.from_points({(0, 0): 1.0}, 2, margin=2)
    assert laplacian(f, (0, 0)) == -1.0
    assert laplacian(f, (1, 0)) == 0.25
    c = Grid(np.full((5, 5), 3.0), (2, 2))
    assert laplacian(c, (0, 0)) == 0.0
    assert laplacian(f, (0, 0), h=0.5) == -4.0


@given(st.integers(0, 2 ** 31), st.sampled_from([2, 3]))
def test_laplacian_sums_to_zero(seed, d):
    rng = np.random.default_rng(seed)
    a = np.zeros((9,) * d)
    a[(slice(2, -2),) * d] = rng.random((5,) * d) * 100
    assert abs(laplacian_array(a).sum()) <= 1e-12 * max(1.0, a.sum())


def test_grid_reads_outside_default_and_growth():
    g = Grid.zeros(1, 2)
    assert g[(10, 10)] == 0
    g[(5, -7)] = 2.5
    assert g[(5, -7)] == 2.5 and g.index((5, -7)) is not None
    fixed = Grid(np.zeros((3, 3)), (1, 1), growable=False)
    with pytest.raises(Exception):
        fixed[(4, 4)] = 1.0


def test_visited_cache_invalidated():
    V = VisitedSet.from_points([(0, 0)], 2, margin=2)
    assert V.interior() == []
    for p in neighbors((0, 0), 2):
        V.add(p)
    assert V.interior() == [(0, 0)]
