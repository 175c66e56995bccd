"""Point-mass boundary sandpile runs at n = 10^3 .. 10^6 with capacity sqrt(n).

Writes a checkpoint, a PPM render and one CSV row per run.

    python3 scripts/point_mass_gallery.py --out runs/point_mass [--max-exp 6]
"""
import argparse
import csv
import os
import time

from bsandpile.io_render import render, save
from bsandpile.stabilize import stabilize_fast
from bsandpile.verify import growth_radii


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/point_mass")
    ap.add_argument("--max-exp", type=int, default=6)
    ap.add_argument("--d", type=int, default=2)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for e in range(3, args.max_exp + 1):
        n = 10.0 ** e
        cap = n ** (1.0 / args.d)
        t = time.perf_counter()
        r = stabilize_fast({(0,) * args.d: n}, cap, args.d)
        dt = time.perf_counter() - t
        stem = os.path.join(args.out, f"bs_n1e{e}")
        save(r.state(), stem + ".bsp")
        render(r, stem + ".ppm")
        r_in, r_out = growth_radii(r.visited)
        k = n ** (1.0 / args.d)
        rows.append([n, cap, len(r.visited), r.phases, r.topplings, round(dt, 2), r_in / k, r_out / k])
        print(f"n=1e{e} visited={len(r.visited)} phases={r.phases} {dt:.1f}s r_in/k={r_in / k:.3f} r_out/k={r_out / k:.3f}")
    with open(os.path.join(args.out, "runs.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["n", "capacity", "visited", "phases", "topplings", "seconds", "r_in_ratio", "r_out_ratio"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
