"""Acceptance gate: the eight shipping criteria, one visible verdict line each.

Each test prints `criterion N PASS/FAIL: ...` through capsys.disabled so the
line is visible in a plain pytest run, then asserts. Scales and tolerances
are fixed; nothing here is tunable from the environment.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from anchorscan.automata import (
    Dfa,
    StateExplosionError,
    build_forward_dfa,
    build_reverse_dfa,
    classic_state_count,
)
from anchorscan.cli import bench_compression, bench_overheads, bench_statecount
from anchorscan.decompose import decompose_rule
from anchorscan.engine import ScanStats, compile_rules, scan_corpus, scan_packet
from anchorscan.oracle import oracle_match
from anchorscan.parser import parse
from anchorscan.prefilter import build_xor_unit, splitmix64
from anchorscan.stt import compress
from anchorscan.synth import (
    diff_packets,
    diff_ruleset,
    dotstar_family,
    filter_stress_ruleset,
    random_packets,
)

STATE_CAP = 1_000_000


def _verdict(capsys, num: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"criterion {num} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


# --- 1: differential correctness ----------------------------------------------


def test_criterion_1_differential(capsys):
    t0 = time.perf_counter()
    rules = diff_ruleset(100, seed=0xACCE)
    db, report = compile_rules(rules)
    assert len(report.supported) == len(rules)
    packets = diff_packets(rules, 150, seed=0xACC1)
    parsed = [parse(p, i) for i, p in enumerate(rules)]

    stats = ScanStats()
    engine_hits = [{r for r, _ in scan_packet(db, pkt, stats)} for pkt in packets]
    comparisons = 0
    disagreements = []
    for pi, pkt in enumerate(packets):
        for rule in parsed:
            comparisons += 1
            want = bool(oracle_match(rule, pkt))
            got = rule.rule_id in engine_hits[pi]
            if want != got:
                disagreements.append((pi, rule.rule_id, got, want))
    elapsed = time.perf_counter() - t0
    ok = comparisons >= 10_000 and not disagreements and elapsed < 300
    _verdict(
        capsys,
        1,
        ok,
        f"{comparisons} (rule,packet) pairs, {len(disagreements)} disagreements, "
        f"{elapsed:.1f}s (< 300s)",
    )


# --- 2: state explosion avoidance ----------------------------------------------


def test_criterion_2_state_explosion(capsys):
    rows = bench_statecount([2, 6, 10, 14, 20], cap=STATE_CAP)
    ratios = [row["ratio"] for row in rows]
    monotone = all(a < b for a, b in zip(ratios, ratios[1:]))
    at_20 = ratios[-1]

    # k=300: the combined unanchored build must blow through the cap while
    # the anchored compile finishes
    trees = [parse(p, i).tree for i, p in enumerate(dotstar_family(300))]
    exploded = False
    visited = 0
    try:
        classic_state_count(trees, cap=STATE_CAP)
    except StateExplosionError as exc:
        exploded = True
        visited = exc.visited
    db300, rep300 = compile_rules(dotstar_family(300))
    anchored300 = rep300.counters["reverse_states"] + rep300.counters["forward_states"]

    bro = Path(__file__).resolve().parent.parent / "data" / "bro217.re"
    bro_note = "bro217 file not supplied, branch skipped"
    bro_ok = True
    if bro.exists():
        patterns = [l for l in bro.read_text().splitlines() if l.strip()]
        _, rep = compile_rules(patterns)
        anchored = rep.counters["reverse_states"] + rep.counters["forward_states"]
        classic = classic_state_count([parse(p, i).tree for i, p in enumerate(patterns)], cap=10**7)
        bro_ok = abs(anchored - 2155) <= 216 and abs(classic - 6533) <= 653
        bro_note = f"bro217 anchored={anchored} classic={classic}"

    ok = monotone and at_20 >= 10 and exploded and visited > STATE_CAP and bro_ok
    _verdict(
        capsys,
        2,
        ok,
        f"ratios {ratios} monotone={monotone}, k=20 ratio {at_20:.0f} >= 10; "
        f"k=300 classic exploded past {STATE_CAP} (visited {visited}) while "
        f"anchored completed with {anchored300} states; {bro_note}",
    )


# --- 3 & 4: filter effectiveness and scan overhead on random traffic -----------


@pytest.fixture(scope="module")
def stress_scan():
    rules = filter_stress_ruleset(25, seed=0x51)
    db, report = compile_rules(rules)
    # every retained key must be individually rare and the total small
    for pattern in rules:
        for frag in decompose_rule(parse(pattern, 0)).bounded:
            for sp in frag.splits:
                assert sp.key.probability < 1e-4
    assert db.bank.key_count <= 200
    runs = {}
    for seed in (1, 2, 3):
        packets = random_packets(10_000_000, seed=seed)
        runs[seed] = scan_corpus(db, packets, workers=1).to_dict()
    return db, runs


def test_criterion_3_filter_effectiveness(stress_scan, capsys):
    db, runs = stress_scan
    ratios = {seed: d["filter_hit_ratio"] for seed, d in runs.items()}
    ok = all(d["bytes"] >= 10_000_000 for d in runs.values()) and all(
        r < 0.005 for r in ratios.values()
    )
    _verdict(
        capsys,
        3,
        ok,
        f"{db.bank.key_count} keys, hit ratios over 3 seeded 10MB runs "
        f"{[round(r, 6) for r in ratios.values()]} all < 0.005",
    )


def test_criterion_4_adfa_overhead(stress_scan, capsys):
    _, runs = stress_scan
    ratios = [d["adfa_byte_ratio"] for d in runs.values()]
    ok = all(r < 0.05 for r in ratios)
    _verdict(
        capsys,
        4,
        ok,
        f"anchored-automata transitions per byte {[round(r, 6) for r in ratios]} all < 0.05",
    )


# --- 5: xor filter false positive rate ------------------------------------------


def test_criterion_5_xor_fp_rate(capsys):
    import random

    rng = random.Random(99)
    keys = set()
    while len(keys) < 10_000:
        keys.add(rng.randbytes(8))
    unit = build_xor_unit(sorted(keys), 8, 8, splitmix64(99))

    false_negatives = sum(0 if unit.contains(k) else 1 for k in keys)
    false_positives = 0
    probes = 0
    while probes < 1_000_000:
        probe = rng.randbytes(8)
        if probe in keys:
            continue
        probes += 1
        false_positives += unit.contains(probe)
    rate = false_positives / probes
    ok = false_negatives == 0 and 2**-9 <= rate <= 2**-7
    _verdict(
        capsys,
        5,
        ok,
        f"10^4-key unit, 10^6 non-member probes: fp rate {rate:.6f} in "
        f"[{2**-9:.6f}, {2**-7:.6f}], false negatives {false_negatives}/10000",
    )


# --- 6: transition table compression --------------------------------------------


def _random_dfa(n_states: int, seed: int) -> Dfa:
    rng = np.random.default_rng(seed)
    table = np.zeros((n_states, 256), dtype=np.uint32)
    cols = rng.integers(0, 256, (n_states, 8))
    targets = rng.integers(1, n_states, (n_states, 8), dtype=np.uint32)
    table[np.arange(n_states)[:, None], cols] = targets
    table[0, :] = 0
    flags = rng.random(n_states) < 0.05
    accepts = tuple(frozenset([0]) if f else frozenset() for f in flags)
    return Dfa(table=table, accepts=accepts, start=1)


def _family_dfas(k: int):
    rev_in, fwd_in = [], []
    for i, pattern in enumerate(dotstar_family(k)):
        for frag in decompose_rule(parse(pattern, i)).bounded:
            for sp in frag.splits:
                sid = len(rev_in)
                rev_in.append((sid, sp.front))
                if sp.back is not None:
                    fwd_in.append((sid, sp.back))
    return build_reverse_dfa(rev_in), build_forward_dfa(fwd_in)


def test_criterion_6_stt_compression(capsys):
    # exhaustive lookup equality, up to the 5000-state bound
    checked = []
    for dfa in [_random_dfa(5000, 42), _random_dfa(257, 7), *_family_dfas(20)]:
        stt = compress(dfa)
        states = np.repeat(np.arange(dfa.n_states), 256)
        bytes_ = np.tile(np.arange(256), dfa.n_states)
        dense = dfa.table[states, bytes_]
        assert np.array_equal(stt.lookup_many(states, bytes_), dense)
        checked.append(dfa.n_states)

    rows = bench_compression([2, 6, 10, 14, 20])
    ratios = [row["ratio"] for row in rows]
    ok = all(r <= 0.10 for r in ratios)
    _verdict(
        capsys,
        6,
        ok,
        f"lookup == dense exhaustively on {checked}-state automata; "
        f"family compression ratios {ratios} (bound 0.10, raw values reported)",
    )


# --- 7: determinism and parallel invariance --------------------------------------


def test_criterion_7_parallel_invariance(capsys):
    rules = filter_stress_ruleset(25, seed=0x51)
    db, _ = compile_rules(rules)
    import random

    rng = random.Random(0x777)
    packets = []
    for i in range(64):
        body = bytearray(rng.randbytes(1024))
        if i % 2 == 0:
            head, tail = rules[rng.randrange(len(rules))].split(".*")
            planted = head.encode() + rng.randbytes(rng.randrange(0, 40)) + tail.encode()
            cut = rng.randrange(0, len(body) + 1)
            body[cut:cut] = planted
        packets.append(bytes(body))

    reports = {w: scan_corpus(db, packets, workers=w).to_json() for w in (1, 4, 8)}
    match_count = len(scan_corpus(db, packets, workers=1).matches)
    ok = reports[1] == reports[4] == reports[8] and match_count > 0
    _verdict(
        capsys,
        7,
        ok,
        f"64-packet corpus, {match_count} matches: JSON reports for workers "
        f"1/4/8 byte-identical={reports[1] == reports[4] == reports[8]}",
    )


# --- 8: desk-scale substitutes for hardware figures -------------------------------


def test_criterion_8_compile_scale(capsys):
    t0 = time.perf_counter()
    _db, report = compile_rules(dotstar_family(300))
    elapsed = time.perf_counter() - t0
    info = bench_overheads(n_rules=25, corpus_bytes=2_000_000, workers=1)[0]
    ok = elapsed < 60 and len(report.supported) == 300
    _verdict(
        capsys,
        8,
        ok,
        f"300-rule compile {elapsed:.2f}s (< 60s); informational: "
        f"throughput {info['throughput_mb_s']} MB/s, maxrss {info['maxrss_mb']} MB, "
        f"db {info['db_bytes']} bytes",
    )
