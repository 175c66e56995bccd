"""Regenerate the committed golden renders in tests/golden.

Run after any palette change.  The n = 10^6 render takes a few minutes.

    python3 scripts/make_goldens.py [--skip-large]
"""
import argparse
import os
import time

from bsandpile.dynamics import stabilize_naive
from bsandpile.io_render import render
from bsandpile.stabilize import stabilize_fast

HERE = os.path.dirname(os.path.abspath(__file__))
GOLDEN = os.path.join(HERE, "..", "tests", "golden")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--skip-large", action="store_true", help="skip the n = 10^6 render")
    args = ap.parse_args()
    os.makedirs(GOLDEN, exist_ok=True)
    render(stabilize_naive({(0, 0): 4.0}, 1.0), os.path.join(GOLDEN, "plus.ppm"))
    ns = [10 ** 3, 10 ** 4, 10 ** 5] + ([] if args.skip_large else [10 ** 6])
    for n in ns:
        t = time.perf_counter()
        r = stabilize_fast({(0, 0): float(n)}, n ** 0.5)
        size = render(r, os.path.join(GOLDEN, f"bs_n{n}.ppm"))
        print(f"n={n} phases={r.phases} bytes={size} seconds={time.perf_counter() - t:.1f}")


if __name__ == "__main__":
    main()
