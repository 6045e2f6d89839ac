#!/usr/bin/env python3
"""Measure prefilter noise: stand-alone xor false-positive rate, then
end-to-end filter hit ratio and anchored-automata work on random traffic."""
import argparse
import sys

from anchorscan.cli import bench_filterfp
from anchorscan.engine import compile_rules, scan_corpus
from anchorscan.synth import filter_stress_ruleset, random_packets


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--keys", type=int, default=10_000)
    ap.add_argument("--probes", type=int, default=100_000)
    ap.add_argument("--rules", type=int, default=25)
    ap.add_argument("--mbytes", type=int, default=10, help="random traffic volume per seed")
    ap.add_argument("--seeds", default="1,2,3")
    args = ap.parse_args()

    row = bench_filterfp(args.keys, args.probes, seed=7)[0]
    print(
        f"xor unit: {row['keys']} keys, fp_rate {row['fp_rate']:.6f} "
        f"(band [{row['band_low']:.6f}, {row['band_high']:.6f}])"
    )

    db, _report = compile_rules(filter_stress_ruleset(args.rules))
    print(f"ruleset: {args.rules} rules, {db.bank.key_count} retained keys")
    for seed in (int(s) for s in args.seeds.split(",")):
        packets = random_packets(args.mbytes * 1_000_000, seed=seed)
        d = scan_corpus(db, packets, workers=1).to_dict()
        print(
            f"seed {seed}: {d['bytes']} bytes, hit_ratio {d['filter_hit_ratio']:.6f}, "
            f"adfa_byte_ratio {d['adfa_byte_ratio']:.6f}, matches {len(d['matches'])}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
