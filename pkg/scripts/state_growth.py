#!/usr/bin/env python3
"""Sweep the dotstar family and record classic vs anchored DFA sizes.

Reproduces the state-blowup comparison: the combined unanchored DFA grows
roughly doubling per added rule while the anchored pair stays linear. With
--probe, also attempt a 300-rule classic build to demonstrate the cap breach.
"""
import argparse
import csv
import sys
import time

from anchorscan.automata import StateExplosionError, classic_state_count
from anchorscan.cli import bench_statecount
from anchorscan.parser import parse
from anchorscan.synth import dotstar_family


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", default="2,4,6,8,10,12,14,16,18,20", help="comma list of rule counts")
    ap.add_argument("--cap", type=int, default=1_000_000)
    ap.add_argument("--probe", type=int, default=0, metavar="K", help="classic build at K rules, expect explosion")
    ap.add_argument("--out", default=None, help="CSV path (default stdout)")
    args = ap.parse_args()

    ks = [int(s) for s in args.k.split(",") if s.strip()]
    rows = bench_statecount(ks, cap=args.cap)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if args.out:
        fh.close()

    if args.probe:
        trees = [parse(p, i).tree for i, p in enumerate(dotstar_family(args.probe))]
        t0 = time.perf_counter()
        try:
            n = classic_state_count(trees, cap=args.cap)
            print(f"probe k={args.probe}: classic completed with {n} states", file=sys.stderr)
        except StateExplosionError as exc:
            print(
                f"probe k={args.probe}: classic exceeded cap after {exc.visited} states "
                f"({time.perf_counter() - t0:.1f}s)",
                file=sys.stderr,
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
