"""Capped-boundary Abelian sandpile: n chips at the origin, boundary capacity k.

Default is the one-million-chip run with k = 1000.  Only conservation and
stability are checked; the picture is for visual comparison.

    python3 scripts/capped_asm.py --n 1000000 --capacity 1000 --out runs/capped_asm
"""
import argparse
import os
import time

from bsandpile.dynamics import stabilize_asm_capped
from bsandpile.io_render import render, save


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10 ** 6)
    ap.add_argument("--capacity", type=int, default=1000)
    ap.add_argument("--out", default="runs/capped_asm")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    t = time.perf_counter()
    s = stabilize_asm_capped({(0, 0): args.n}, args.capacity)
    dt = time.perf_counter() - t
    V = s.visited
    chips = s.chips.data
    conserved = int(chips.sum()) == args.n
    stable = chips[V.interior_mask].max(initial=0) <= 3 and chips[V.boundary_mask].max(initial=0) <= args.capacity
    save(s, os.path.join(args.out, "capped.bsp"))
    render(s, os.path.join(args.out, "capped.ppm"))
    print(f"n={args.n} capacity={args.capacity} visited={len(V)} firings={s.firings} {dt:.1f}s "
          f"conserved={conserved} stable={stable}")
    raise SystemExit(0 if conserved and stable else 1)


if __name__ == "__main__":
    main()
