"""Byte classes: sets of byte values represented as 256-bit masks.

Every leaf of a pattern tree is a ByteClass. The alphabet is the full byte
range 0..255; there is no notion of text encoding anywhere in the matcher.
"""
from __future__ import annotations

from dataclasses import dataclass

FULL_MASK = (1 << 256) - 1


@dataclass(frozen=True)
class ByteClass:
    """An immutable set of byte values, stored as a 256-bit integer mask."""

    mask: int

    def __post_init__(self) -> None:
        if not 0 < self.mask <= FULL_MASK:
            raise ValueError("byte class must be a non-empty subset of 0..255")

    @staticmethod
    def of(*values: int) -> "ByteClass":
        m = 0
        for v in values:
            m |= 1 << (v & 0xFF)
        return ByteClass(m)

    @staticmethod
    def from_bytes(data: bytes) -> "ByteClass":
        return ByteClass.of(*data)

    @staticmethod
    def from_ranges(*ranges: tuple[int, int]) -> "ByteClass":
        m = 0
        for lo, hi in ranges:
            m |= ((1 << (hi - lo + 1)) - 1) << lo
        return ByteClass(m)

    @staticmethod
    def full() -> "ByteClass":
        return ByteClass(FULL_MASK)

    @property
    def population(self) -> int:
        return self.mask.bit_count()

    @property
    def probability(self) -> float:
        """Probability that a uniform random byte lands in this class."""
        return self.population / 256.0

    def __contains__(self, byte: int) -> bool:
        return (self.mask >> byte) & 1 == 1

    def negate(self) -> "ByteClass":
        return ByteClass(self.mask ^ FULL_MASK)

    def union(self, other: "ByteClass") -> "ByteClass":
        return ByteClass(self.mask | other.mask)

    def members(self) -> list[int]:
        m = self.mask
        out = []
        while m:
            low = m & -m
            out.append(low.bit_length() - 1)
            m ^= low
        return out

    def single(self) -> int | None:
        """The lone byte value if the class is a singleton, else None."""
        if self.population == 1:
            return self.mask.bit_length() - 1
        return None


DIGIT = ByteClass.from_ranges((0x30, 0x39))
SPACE = ByteClass.of(0x20, 0x09, 0x0A, 0x0D, 0x0C, 0x0B)
WORD = ByteClass.from_ranges((0x30, 0x39), (0x41, 0x5A), (0x61, 0x7A)).union(
    ByteClass.of(0x5F)
)
DOT = ByteClass.full()
