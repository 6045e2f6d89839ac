#!/usr/bin/env python3
"""Software throughput and memory snapshot across worker counts.

Informational only; absolute numbers depend entirely on the host.
"""
import argparse
import csv
import sys

from anchorscan.cli import bench_overheads


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rules", type=int, default=25)
    ap.add_argument("--mbytes", type=int, default=4)
    ap.add_argument("--workers", default="1,4,8")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    rows = []
    for w in (int(s) for s in args.workers.split(",")):
        rows.extend(bench_overheads(n_rules=args.rules, corpus_bytes=args.mbytes * 1_000_000, workers=w))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    cw = csv.DictWriter(fh, fieldnames=list(rows[0]))
    cw.writeheader()
    cw.writerows(rows)
    if args.out:
        fh.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
