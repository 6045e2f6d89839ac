#!/usr/bin/env python3
"""Print sparse transition-table footprints for the dotstar family automata."""
import csv
import sys

from anchorscan.cli import bench_compression

KS = [2, 6, 10, 14, 20]

rows = bench_compression(KS)
w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
w.writeheader()
w.writerows(rows)
