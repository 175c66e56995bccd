"""Scaled odometers along the ladder n, 4n, 16n, ... (d = 2).

Logs sup_{|x|>rho} |u_h - u_h'| for consecutive rungs and runs the cone
check on each visited set.

    python3 scripts/scaling_ladder.py --n 1e4 --rungs 3 --model bs
"""
import argparse
import csv
import os

from bsandpile.dynamics import stabilize_asm
from bsandpile.scaling import boundary_cone_check, compare_scaled, scaled_odometer
from bsandpile.stabilize import stabilize_fast


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=float, default=1e4)
    ap.add_argument("--rungs", type=int, default=3)
    ap.add_argument("--rho", type=float, default=0.2)
    ap.add_argument("--model", choices=("bs", "asm"), default="bs")
    ap.add_argument("--out", default="runs/scaling")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    ns = [args.n * 4 ** k for k in range(args.rungs)]
    if args.model == "bs":
        runs = [stabilize_fast({(0, 0): n}, n ** 0.5) for n in ns]
    else:
        runs = [stabilize_asm({(0, 0): int(n)}) for n in ns]
    scaled = [scaled_odometer(r) for r in runs]
    rows = []
    for a, b, sa, sb in zip(ns, ns[1:], scaled, scaled[1:]):
        x = compare_scaled(sa, sb, args.rho)
        rows.append([a, b, x])
        print(f"{a:g} -> {b:g}: sup |u_h - u_h'| over |x| > {args.rho} = {x:.5f}")
    for n, r, s in zip(ns, runs, scaled):
        rep = boundary_cone_check(r)
        print(f"n={n:g} u_h(0)={s.at((0, 0)):.4f} support radius={s.support_radius():.4f} cone={rep.status}")
    with open(os.path.join(args.out, f"ladder_{args.model}.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["n_a", "n_b", "discrepancy"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
