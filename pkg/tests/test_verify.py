import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsandpile.dynamics import stabilize_asm, stabilize_naive
from bsandpile.lattice import Grid, VisitedSet, discrete_ball
from bsandpile.report import VerificationReport, reports_to_csv
from bsandpile.stabilize import stabilize_fast
from bsandpile.verify import (DirectionSet, factor_band, growth_radii, interior_minimum, lipschitz_constant, reflect,
                              verify_asm_least_action, verify_growth, verify_lipschitz, verify_lower_bound,
                              verify_monotonicity, verify_simply_connected, verify_symmetry)


def plus_state():
    return stabilize_naive({(0, 0): 4.0}, 1.0)


def test_direction_set():
    assert set(DirectionSet(2).vectors) == {(1, 0), (0, 1), (1, 1), (1, -1)}
    assert len(DirectionSet(3)) == 9 and len(DirectionSet(4)) == 16


def test_reflect_involution():
    a = np.arange(49.0).reshape(7, 7)
    for e in DirectionSet(2):
        assert np.array_equal(reflect(reflect(a, e), e), a)
    assert np.array_equal(reflect(a, (1, -1)), a.T)
    assert np.array_equal(reflect(a, (1, 1)), a[::-1, ::-1].T)


def test_symmetry_plus_and_skip():
    rep = verify_symmetry(plus_state())
    assert rep.passed and rep.worst == 0.0
    asym = stabilize_fast({(0, 0): 50.0, (1, 0): 20.0}, 3.0)
    assert verify_symmetry(asym).skipped


def test_symmetry_3d():
    assert verify_symmetry(stabilize_fast({(0, 0, 0): 2000.0}, 2000 ** (1 / 3))).passed


def test_monotonicity_plus_and_runs():
    assert verify_monotonicity(plus_state()).passed
    n = 1e4
    assert verify_monotonicity(stabilize_fast({(0, 0): n}, 100.0), tol=1e-8 * n).passed
    assert verify_monotonicity(stabilize_asm({(0, 0): 10000}), tol=0).passed


def test_monotonicity_detects_violation():
    u = Grid(np.zeros((9, 9)), (4, 4))
    u[(0, 0)] = 5.0
    u[(1, 0)] = 3.0
    u[(3, 0)] = 4.0
    rep = verify_monotonicity(u)
    # (-3,0) has the same norm as (3,0) but holds 0; diagonal lines meet zeros nearer the origin
    assert not rep.passed and rep.worst == 4.0
    per = rep.details["per_direction"]
    assert per["(1, 0)"]["worst"] == 4.0 and per["(0, 1)"]["worst"] == 0.0


def test_growth_radii_ball():
    r_in, r_out = growth_radii(discrete_ball(10, 2))
    assert r_in > 10 - 1e-12
    assert r_out == pytest.approx(10, abs=1.0)
    single = verify_growth([stabilize_fast({(0, 0): 1000.0}, 1000 ** 0.5)])
    assert single.passed and single.samples == 1


def test_factor_band():
    assert factor_band([1, 1.5, 1.9])[0]
    assert not factor_band([1, 1, 5])[0]


def test_lipschitz_and_lower_bound_small_sweep():
    runs = [stabilize_fast({(0, 0): n}, n ** 0.5) for n in (1e3, 1e4)]
    assert verify_lipschitz(runs, 0.2).passed
    assert verify_lower_bound(runs, 0.2).passed
    assert lipschitz_constant(Grid(np.zeros((5, 5)), (2, 2)), 100.0, 0.2) == 0.0
    assert verify_lower_bound(runs, 50.0).skipped


def test_lower_bound_origin_consistency():
    from bsandpile.potential import greens_on
    n = 1e4
    r = stabilize_fast({(0, 0): n}, 100.0)
    m, loc, cnt = interior_minimum(r, 0.01)
    assert cnt > 0 and m * n <= r.odometer[(0, 0)]
    assert r.odometer[(0, 0)] == pytest.approx(n * greens_on(r.visited)[(0, 0)], rel=1e-10)


def test_asm_least_action_examples():
    assert verify_asm_least_action(stabilize_asm({(0, 0): 4})).passed
    three = verify_asm_least_action(stabilize_asm({(0, 0): 3}))
    assert three.passed
    assert verify_asm_least_action(stabilize_asm({(0, 0): 1000}), trials=50).passed


def test_asm_least_action_rejects_wrong_odometer():
    s = stabilize_asm({(0, 0): 1000})
    bad = Grid(s.odometer.data.copy(), s.odometer.origin)
    bad[(0, 0)] = bad[(0, 0)] - 1
    assert not verify_asm_least_action(s.chips0, bad).passed
    big = Grid(s.odometer.data + 1, s.odometer.origin)
    assert not verify_asm_least_action(s.chips0, big).passed


def test_simply_connected():
    assert verify_simply_connected(stabilize_asm({(0, 0): 5000})).passed
    ring = np.ones((7, 7), bool)
    ring[3, 3] = False
    assert not verify_simply_connected(VisitedSet(Grid(ring, (3, 3)))).passed


def test_report_serialization():
    rep = verify_symmetry(plus_state())
    assert rep.to_line() == verify_symmetry(plus_state()).to_line()
    text = reports_to_csv([rep, VerificationReport.skip("x", "why")])
    assert text.count("\n") == 3


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1))
def test_point_mass_symmetry_random_capacity(seed):
    rng = np.random.default_rng(seed)
    n = float(rng.uniform(50, 3000))
    s = stabilize_fast({(0, 0): n}, float(rng.uniform(0.3, 1.0)) * n ** 0.5)
    assert verify_symmetry(s).passed
    assert verify_monotonicity(s, tol=1e-8 * n).passed
