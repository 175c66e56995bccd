"""Acceptance criteria 1-11, each at its stated tolerance.

Every criterion records one PASS/FAIL line; the lines are printed in the
pytest terminal summary (see conftest.py) and when this file is run as a
script:  python3 tests/test_acceptance.py
"""
import math
import os
import time

import numpy as np
import pytest

from bsandpile import suites
from bsandpile.dynamics import stabilize_asm
from bsandpile.io_render import render_array, encode_ppm
from bsandpile.potential import bounds_table, greens_on
from bsandpile.scaling import boundary_cone_check, compare_scaled, scaled_odometer
from bsandpile.verify import (factor_band, verify_asm_least_action, verify_growth, verify_lipschitz,
                              verify_lower_bound, verify_monotonicity, verify_simply_connected, verify_symmetry)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
SWEEP = [10 ** 3, 10 ** 4, 10 ** 5]
GROWTH_SWEEP = SWEEP + [10 ** 6]
RESULTS: dict[int, str] = {}
_TIMES: dict[float, float] = {}


def record(k: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[k] = line
    print(line)
    assert ok, line


def run(n):
    """Cached point-mass BS run with capacity sqrt(n); wall time kept per n."""
    if float(n) not in _TIMES:
        t = time.perf_counter()
        suites.point_run(n)
        _TIMES[float(n)] = time.perf_counter() - t
    return suites.point_run(n)


def test_criterion_01_oracle():
    t = time.perf_counter()
    reps = suites.oracle(seeds=30, seeds_3d=10)
    dt = time.perf_counter() - t
    ok = all(r.passed for r in reps) and dt < 120
    record(1, "oracle equivalence fast vs naive", ok,
           ", ".join(f"{r.check} worst={r.worst:.2e}/n over {r.samples}" for r in reps) + f", {dt:.1f}s < 120s")


def test_criterion_02_abelian():
    t = time.perf_counter()
    reps = suites.abelian(seeds=20)
    dt = time.perf_counter() - t
    ok = all(r.passed for r in reps) and dt < 60
    record(2, "abelianness", ok, f"BS worst={reps[0].worst:.2e}/n, ASM mismatches={int(reps[1].worst)}, {dt:.1f}s < 60s")


def test_criterion_03_balayage():
    reps = {r.check: r for r in suites.balayage(seeds=20)}
    eq, fx = reps["balayage_equivalence"], reps["path_fixture"]
    record(3, "balayage equivalence", eq.passed and fx.passed,
           f"matrix vs Dirichlet worst rel={eq.worst:.2e} (tol 1e-9), path fixture err={fx.worst:.1e} (tol 1e-12)")


def test_criterion_04_spectral():
    rep = {r.check: r for r in suites.balayage(seeds=20)}["spectral_radius"]
    d = rep.details
    record(4, "spectral radius", rep.passed,
           f"max rho={d['max_rho']:.4f} < 1, power vs eig gap={rep.worst:.1e}, path rho={d['path_rho']:.12f}")


def test_criterion_05_symmetry():
    t = time.perf_counter()
    reps = [verify_symmetry(run(n)) for n in SWEEP]
    dt = time.perf_counter() - t
    ok = all(r.passed for r in reps) and dt < 300
    record(5, "reflection symmetry", ok,
           ", ".join(f"n={int(r.params['n'])} worst={r.worst / r.params['n']:.1e}·n" for r in reps) + f", {dt:.1f}s < 300s")


def test_criterion_06_monotonicity():
    bs = [verify_monotonicity(run(n), tol=1e-8 * n, n=n) for n in SWEEP]
    asm = [verify_monotonicity(suites.asm_run(n), tol=0.0, n=n) for n in SWEEP]
    ok = all(r.passed for r in bs + asm)
    ties = sum(r.details.get("strictness_ties", 0) for r in bs + asm)
    record(6, "directional monotonicity", ok,
           "BS worst " + ", ".join(f"{r.worst:.1e}" for r in bs) + "; ASM worst " +
           ", ".join(f"{r.worst:g}" for r in asm) + f"; strictness ties (diagnostic)={ties}")


def test_criterion_07_growth():
    runs = [run(n) for n in GROWTH_SWEEP]
    rep = verify_growth(runs)
    t6 = _TIMES[1e6]
    ok = rep.passed and t6 < 600
    ratios = "; ".join(f"n={int(r['n'])} in={r['in_ratio']:.3f} out={r['out_ratio']:.3f}" for r in rep.details["runs"])
    record(7, "growth radii and nesting", ok, f"{ratios}; nested={rep.location is None}; n=1e6 run {t6:.0f}s < 600s")


def test_criterion_08_lipschitz_lower():
    runs = [run(n) for n in GROWTH_SWEEP]
    lip = verify_lipschitz(runs, r0=0.2)
    low = verify_lower_bound(runs, r0=0.2)
    ok = lip.passed and low.passed
    record(8, "Lipschitz and lower bounds", ok,
           "L/n^(1/2)=" + ",".join(f"{r['L']:.2f}" for r in lip.details["runs"]) +
           "; min u/n=" + ",".join(f"{r['m']:.2f}" for r in low.details["runs"]))


def test_criterion_09_greens():
    rows = bounds_table(range(10, 201, 10))
    ok_lo, med_lo = factor_band([r.min_normalized for r in rows])
    ok_hi, med_hi = factor_band([r.max_normalized for r in rows])
    n = 1e4
    r = run(n)
    G = greens_on(r.visited)
    rad = max(G.symmetric_radius(), r.odometer.symmetric_radius())
    err = float(np.abs(n * G.embed(rad).data - r.odometer.embed(rad).data).max())
    ok = ok_lo and ok_hi and err <= 1e-8 * n
    record(9, "Green's diagnostics", ok,
           f"normalized min in [{min(r.min_normalized for r in rows):.4f},{max(r.min_normalized for r in rows):.4f}], "
           f"max in [{min(r.max_normalized for r in rows):.4f},{max(r.max_normalized for r in rows):.4f}]; "
           f"|u - nG_V|={err / n:.1e}·n")


def test_criterion_10_asm():
    parts = []
    ok = True
    for n in (10 ** 3, 10 ** 4):
        a = suites.asm_run(n)
        top = int(a.chips.data.max())
        la = verify_asm_least_action(a, trials=50)
        sc = verify_simply_connected(a)
        ok &= top <= 3 and la.passed and sc.passed
        parts.append(f"n={n} max height={top} least action={la.status} simply connected={sc.status}")
    big = suites.asm_run(10 ** 5)
    top = int(big.chips.data.max())
    cone = boundary_cone_check(big, slack=1)
    sc = verify_simply_connected(big)
    ok &= cone.passed and top <= 3 and sc.passed
    parts.append(f"n=1e5 max height={top} cone={cone.status} ({cone.samples} cells) simply connected={sc.status}")
    record(10, "ASM suite", ok, "; ".join(parts))


def test_criterion_11_scaling():
    ladder = [10 ** 4, 4 * 10 ** 4, 16 * 10 ** 4]
    scaled = [scaled_odometer(run(n)) for n in ladder]
    disc = [compare_scaled(a, b, 0.2) for a, b in zip(scaled, scaled[1:])]
    cones = [boundary_cone_check(run(n)) for n in ladder]
    golden = []
    for n in GROWTH_SWEEP:
        with open(os.path.join(GOLDEN, f"bs_n{n}.ppm"), "rb") as f:
            golden.append(encode_ppm(render_array(run(n))) == f.read())
    ok = all(math.isfinite(x) for x in disc) and all(c.passed for c in cones) and all(golden)
    record(11, "scaling ladder", ok,
           "discrepancy " + ", ".join(f"{a}->{b}: {x:.4f}" for a, b, x in zip(ladder, ladder[1:], disc)) +
           f"; cones {'/'.join(c.status for c in cones)}; golden renders equal={sum(golden)}/{len(golden)}")


def test_monotonicity_scan_speed():
    """Full monotonicity scan of the n = 10^6 odometer in under 10 s."""
    r = run(10 ** 6)
    t = time.perf_counter()
    rep = verify_monotonicity(r, tol=1e-8 * 1e6, n=1e6)
    dt = time.perf_counter() - t
    assert rep.passed and dt < 10, (rep.worst, dt)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
