import numpy as np
import pytest
from hypothesis import given, strategies as st

from bsandpile.dynamics import stabilize_asm
from bsandpile.lattice import Grid, VisitedSet, laplacian_array
from bsandpile.scaling import (CubeExtension, boundary_cone_check, compare_scaled, cone_facets, cone_generators,
                               scaled_odometer)
from bsandpile.stabilize import stabilize_fast


def run(n):
    return stabilize_fast({(0, 0): n}, n ** 0.5)


def test_zero_and_origin_scale():
    z = scaled_odometer(Grid(np.zeros((5, 5)), (2, 2)), 100.0)
    assert not z.values.any()
    r = run(1e4)
    s = scaled_odometer(r)
    assert s.h == pytest.approx(1e-2)
    assert s.at((0, 0)) == pytest.approx(r.odometer[(0, 0)] / 1e4)
    assert 0.1 < s.at((0, 0)) < 10
    assert 0.1 < s.support_radius() < 10


def test_unscaled_is_bitwise():
    r = run(1e3)
    s = scaled_odometer(r)
    assert s.unscaled() is r.odometer
    back = s.values / s.h ** 2
    assert np.array_equal(s.unscaled().data, r.odometer.data)
    assert np.allclose(back, r.odometer.data, rtol=1e-15, atol=0)


def test_requires_positive_n():
    with pytest.raises(ValueError):
        scaled_odometer(Grid(np.zeros((3, 3)), (1, 1)), 0.0)


def test_cube_extension_constant_on_cubes():
    s = scaled_odometer(run(1e3))
    cube = CubeExtension(s)
    h = s.h
    rng = np.random.default_rng(0)
    xi = rng.integers(-10, 11, size=(200, 2))
    jitter = rng.uniform(-0.5, 0.5, size=(200, 2)) * h * 0.999
    centers = cube(xi * h)
    assert np.array_equal(centers, cube(xi * h + jitter))
    assert np.allclose(centers, [s.at(tuple(p)) for p in xi], rtol=0, atol=0)


def test_cube_extension_preserves_h_laplacian():
    s = scaled_odometer(run(1e3))
    h = s.h
    r = s.raw.symmetric_radius()
    pts, vals = CubeExtension(s).raster(h, r * h)
    direct = s.raw.embed(r).data * h ** 2
    assert np.allclose(laplacian_array(vals, h), laplacian_array(direct, h), rtol=0, atol=1e-12)


def test_compare_scaled():
    a = scaled_odometer(run(1e3))
    assert compare_scaled(a, a) == 0.0
    b = scaled_odometer(run(4e3))
    c = scaled_odometer(run(1.6e4))
    ab, bc = compare_scaled(a, b), compare_scaled(b, c)
    assert np.isfinite(ab) and np.isfinite(bc) and ab > 0
    assert compare_scaled(a, b, rho=0.0) >= ab


def test_asm_scaled_pipeline():
    s = stabilize_asm({(0, 0): 4000})
    sa = scaled_odometer(s)
    assert sa.n == 4000 and sa.values.max() > 0
    assert compare_scaled(sa, scaled_odometer(stabilize_asm({(0, 0): 16000}))) < np.inf


def test_cone_generators_rule():
    g = cone_generators([0, 5])
    assert {tuple(v) for v in g} == {(0, 1), (1, 1), (-1, 1)}
    g = cone_generators([5, 5])
    assert {tuple(v) for v in g} == {(0, 1), (1, 0)}
    g = cone_generators([2, 5])
    assert {tuple(v) for v in g} == {(0, 1), (1, 1), (-1, 1), (1, 0)}
    F = cone_facets(cone_generators([0, 5]))
    assert len(F) == 2 and np.all(F @ np.array([0, 1.0]) > 0)


def square(k):
    m = np.ones((2 * k + 1,) * 2, bool)
    return VisitedSet(Grid(np.pad(m, 2), (k + 2, k + 2)))


def diamond(k):
    x = np.arange(-k - 2, k + 3)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return VisitedSet(Grid(np.abs(X) + np.abs(Y) <= k, (k + 2, k + 2)))


@pytest.mark.parametrize("make", [square, diamond])
def test_cone_fixtures(make):
    rep = boundary_cone_check(make(20))
    assert rep.passed and rep.samples > 0


def test_cone_detects_spike():
    V = square(20)
    V.grid[(0, 23)] = True
    V.grid[(0, 24)] = True
    V.grid[(0, 25)] = True
    V.touch()
    assert not boundary_cone_check(V, slack=0).passed


def test_cone_on_runs():
    assert boundary_cone_check(run(1e4)).passed
    assert boundary_cone_check(stabilize_asm({(0, 0): 10000})).passed


@given(st.integers(2, 12))
def test_cone_on_balls(k):
    from bsandpile.lattice import discrete_ball
    assert boundary_cone_check(discrete_ball(k + 0.5, 2)).passed
