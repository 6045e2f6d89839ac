"""The filter bank: membership structures gating the rest of the pipeline.

Three units, one per supported key length. Length-2 keys live in an exact
2^16-bit bitmap (no false positives). Length-4 and length-8 keys live in
3-way xor filters: per key, three slots chosen by hash must xor to the key's
fingerprint. Lookups cost three loads and never miss a member; non-members
pass at roughly 2^-k for k fingerprint bits.

Scanning queries the trailing 2-, 4- and 8-byte windows at every offset of a
packet. The hot path is vectorized over the whole packet; the scalar query
path is kept bit-identical to it (tests enforce this).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .decompose import FilterKey

_M64 = (1 << 64) - 1
_CHUNK = 0x1FFFFF  # 21-bit index chunks from one 64-bit hash

#: unit codes; also the tie-break order for hits at the same end offset
UNIT_DIRECT = 2
UNIT_XOR4 = 4
UNIT_XOR8 = 8


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def _splitmix64_vec(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


class FilterBuildError(RuntimeError):
    pass


# --- exact unit for 2-byte keys ------------------------------------------------


class DirectFilterUnit:
    """65536-bit bitmap indexed by the big-endian value of a 2-byte window."""

    def __init__(self, bitmap: np.ndarray | None = None):
        self.bitmap = bitmap if bitmap is not None else np.zeros(8192, dtype=np.uint8)

    def add(self, key: bytes) -> None:
        idx = (key[0] << 8) | key[1]
        self.bitmap[idx >> 3] |= np.uint8(1 << (idx & 7))

    def contains(self, window: bytes) -> bool:
        idx = (window[0] << 8) | window[1]
        return bool((int(self.bitmap[idx >> 3]) >> (idx & 7)) & 1)

    @property
    def key_count(self) -> int:
        return int(np.unpackbits(self.bitmap).sum())

    def hit_offsets(self, values: np.ndarray) -> np.ndarray:
        """Boolean hit mask for an array of 2-byte window values."""
        v = values.astype(np.int64)
        return ((self.bitmap[v >> 3] >> (v & 7).astype(np.uint8)) & 1).astype(bool)

    def __eq__(self, other) -> bool:
        return isinstance(other, DirectFilterUnit) and np.array_equal(self.bitmap, other.bitmap)


# --- xor units for 4- and 8-byte keys --------------------------------------------


@dataclass
class XorFilterUnit:
    """3-way xor filter over fixed-width byte windows.

    `fingerprints` holds three consecutive blocks of `block_len` slots; a key
    hashes to one slot per block and is a member iff the three slots xor to
    its fingerprint.
    """

    width: int
    fp_bits: int
    seed: int = 0
    block_len: int = 0
    key_count: int = 0
    fingerprints: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint32))

    @property
    def is_empty(self) -> bool:
        return self.key_count == 0

    def _mix(self, value: int) -> tuple[int, int, int, int]:
        h = splitmix64(value ^ self.seed)
        i0 = (h & _CHUNK) % self.block_len
        i1 = ((h >> 21) & _CHUNK) % self.block_len + self.block_len
        i2 = ((h >> 42) & _CHUNK) % self.block_len + 2 * self.block_len
        fp = splitmix64(h) & ((1 << self.fp_bits) - 1)
        return i0, i1, i2, fp

    def contains(self, window: bytes) -> bool:
        if self.is_empty:
            return False
        value = int.from_bytes(window, "big")
        i0, i1, i2, fp = self._mix(value)
        slots = self.fingerprints
        return (int(slots[i0]) ^ int(slots[i1]) ^ int(slots[i2])) == fp

    def hit_mask(self, values: np.ndarray) -> np.ndarray:
        if self.is_empty:
            return np.zeros(len(values), dtype=bool)
        h = _splitmix64_vec(values ^ np.uint64(self.seed))
        bl = np.uint64(self.block_len)
        chunk = np.uint64(_CHUNK)
        i0 = (h & chunk) % bl
        i1 = ((h >> np.uint64(21)) & chunk) % bl + bl
        i2 = ((h >> np.uint64(42)) & chunk) % bl + np.uint64(2) * bl
        fp = _splitmix64_vec(h) & np.uint64((1 << self.fp_bits) - 1)
        slots = self.fingerprints
        got = slots[i0.astype(np.int64)] ^ slots[i1.astype(np.int64)] ^ slots[i2.astype(np.int64)]
        return got.astype(np.uint64) == fp

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, XorFilterUnit)
            and self.width == other.width
            and self.fp_bits == other.fp_bits
            and self.seed == other.seed
            and self.block_len == other.block_len
            and self.key_count == other.key_count
            and np.array_equal(self.fingerprints, other.fingerprints)
        )


def build_xor_unit(
    keys: list[bytes],
    width: int,
    fp_bits: int,
    base_seed: int,
    attempts: int = 100,
) -> XorFilterUnit:
    """Peel-and-backfill construction; retries with fresh seeds on failure."""
    unit = XorFilterUnit(width=width, fp_bits=fp_bits)
    values = sorted({int.from_bytes(k, "big") for k in keys})
    if not values:
        return unit
    n = len(values)
    unit.key_count = n
    # 1.23x capacity factor plus constant slack so tiny key sets still peel
    capacity = 32 + -(-123 * n // 100)
    unit.block_len = -(-capacity // 3)

    for attempt in range(attempts):
        unit.seed = splitmix64(base_seed ^ (attempt * 0x9E3779B97F4A7C15 & _M64))
        order = _peel(unit, values)
        if order is None:
            continue
        slots = np.zeros(3 * unit.block_len, dtype=np.uint32)
        for value, slot in reversed(order):
            i0, i1, i2, fp = unit._mix(value)
            acc = fp
            for j in (i0, i1, i2):
                if j != slot:
                    acc ^= int(slots[j])
            slots[slot] = acc
        unit.fingerprints = slots
        return unit
    raise FilterBuildError(
        f"xor unit (width {width}) failed to build after {attempts} seeds for {n} keys"
    )


def _peel(unit: XorFilterUnit, values: list[int]) -> list[tuple[int, int]] | None:
    """Order keys so each has a slot no later key touches; None if stuck."""
    m = 3 * unit.block_len
    count = [0] * m
    key_xor = [0] * m  # xor of key indices per slot; identifies the lone key
    triples = []
    for idx, value in enumerate(values):
        i0, i1, i2, _ = unit._mix(value)
        triples.append((i0, i1, i2))
        for j in (i0, i1, i2):
            count[j] += 1
            key_xor[j] ^= idx
    stack: list[tuple[int, int]] = []
    queue = [j for j in range(m) if count[j] == 1]
    while queue:
        slot = queue.pop()
        if count[slot] != 1:
            continue
        idx = key_xor[slot]
        stack.append((values[idx], slot))
        for j in triples[idx]:
            count[j] -= 1
            key_xor[j] ^= idx
            if count[j] == 1:
                queue.append(j)
    if len(stack) != len(values):
        return None
    return stack


# --- the bank ---------------------------------------------------------------------


@dataclass
class FilterBank:
    unit2: DirectFilterUnit
    unit4: XorFilterUnit
    unit8: XorFilterUnit
    #: concrete key -> split ids that planted it; statistics only, not serialized
    key_owners: dict[bytes, tuple[int, ...]] | None = None

    @property
    def key_count(self) -> int:
        return self.unit2.key_count + self.unit4.key_count + self.unit8.key_count

    def query(self, window: bytes) -> bool:
        if len(window) == 2:
            return self.unit2.contains(window)
        if len(window) == 4:
            return self.unit4.contains(window)
        if len(window) == 8:
            return self.unit8.contains(window)
        raise ValueError("window must be 2, 4 or 8 bytes")

    def scan(self, data: bytes) -> tuple[np.ndarray, np.ndarray]:
        """All filter hits over a packet.

        Returns (end_offsets, unit_codes) sorted by end offset, direct unit
        before xor-4 before xor-8 at equal offsets.
        """
        n = len(data)
        offs: list[np.ndarray] = []
        codes: list[np.ndarray] = []
        if n >= 2:
            u = np.frombuffer(data, dtype=np.uint8).astype(np.uint64)
            v2 = (u[:-1] << np.uint64(8)) | u[1:]
            mask = self.unit2.hit_offsets(v2)
            hit = np.flatnonzero(mask) + 1
            offs.append(hit)
            codes.append(np.full(len(hit), UNIT_DIRECT, dtype=np.uint8))
            if n >= 4 and not (self.unit4.is_empty and self.unit8.is_empty):
                v4 = (v2[:-2] << np.uint64(16)) | v2[2:]
                if not self.unit4.is_empty:
                    hit = np.flatnonzero(self.unit4.hit_mask(v4)) + 3
                    offs.append(hit)
                    codes.append(np.full(len(hit), UNIT_XOR4, dtype=np.uint8))
                if n >= 8 and not self.unit8.is_empty:
                    v8 = (v4[:-4] << np.uint64(32)) | v4[4:]
                    hit = np.flatnonzero(self.unit8.hit_mask(v8)) + 7
                    offs.append(hit)
                    codes.append(np.full(len(hit), UNIT_XOR8, dtype=np.uint8))
        if not offs:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.uint8)
        end = np.concatenate(offs).astype(np.int64)
        unit = np.concatenate(codes)
        order = np.lexsort((unit, end))
        return end[order], unit[order]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FilterBank)
            and self.unit2 == other.unit2
            and self.unit4 == other.unit4
            and self.unit8 == other.unit8
        )

    # --- serialization: magic, version, fp bits, seeds, slots, bitmap ---

    MAGIC = b"ASFB"
    VERSION = 1

    def to_bytes(self) -> bytes:
        out = [self.MAGIC, struct.pack("<HB", self.VERSION, self.unit8.fp_bits)]
        out.append(self.unit2.bitmap.tobytes())
        for unit in (self.unit4, self.unit8):
            out.append(struct.pack("<BQII", unit.width, unit.seed, unit.key_count, unit.block_len))
            out.append(unit.fingerprints.astype("<u4").tobytes())
        return b"".join(out)

    @staticmethod
    def from_bytes(blob: bytes) -> "FilterBank":
        if blob[:4] != FilterBank.MAGIC:
            raise ValueError("not a filter bank blob")
        version, fp_bits = struct.unpack_from("<HB", blob, 4)
        if version != FilterBank.VERSION:
            raise ValueError(f"unsupported filter bank version {version}")
        pos = 7
        bitmap = np.frombuffer(blob, dtype=np.uint8, count=8192, offset=pos).copy()
        pos += 8192
        units = []
        for _ in range(2):
            width, seed, key_count, block_len = struct.unpack_from("<BQII", blob, pos)
            pos += struct.calcsize("<BQII")
            fingerprints = np.frombuffer(blob, dtype="<u4", count=3 * block_len, offset=pos).copy()
            pos += 4 * 3 * block_len
            units.append(
                XorFilterUnit(
                    width=width,
                    fp_bits=fp_bits,
                    seed=seed,
                    block_len=block_len,
                    key_count=key_count,
                    fingerprints=fingerprints.astype(np.uint32),
                )
            )
        return FilterBank(DirectFilterUnit(bitmap), units[0], units[1])


def build_filter_bank(
    keyed_splits: list[tuple[int, FilterKey]],
    fp_bits: int = 8,
    seed: int = 0x5EED,
    attempts: int = 100,
) -> FilterBank:
    """Expand every split's key and plant the strings in the right unit."""
    by_len: dict[int, set[bytes]] = {2: set(), 4: set(), 8: set()}
    owners: dict[bytes, set[int]] = {}
    for split_id, key in keyed_splits:
        for concrete in key.expand():
            by_len[key.length].add(concrete)
            owners.setdefault(concrete, set()).add(split_id)

    unit2 = DirectFilterUnit()
    for k in sorted(by_len[2]):
        unit2.add(k)
    unit4 = build_xor_unit(sorted(by_len[4]), 4, fp_bits, splitmix64(seed ^ 4), attempts)
    unit8 = build_xor_unit(sorted(by_len[8]), 8, fp_bits, splitmix64(seed ^ 8), attempts)
    return FilterBank(
        unit2,
        unit4,
        unit8,
        key_owners={k: tuple(sorted(v)) for k, v in owners.items()},
    )
