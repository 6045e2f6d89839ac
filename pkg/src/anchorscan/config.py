"""Compile-time knobs, all defaultable from the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

#: Key lengths the filter bank can hold: 2 hits the exact bitmap, 4 and 8 the
#: xor units. Window trimming always lands on one of these.
SUPPORTED_KEY_LENGTHS = (2, 4, 8)


@dataclass(frozen=True)
class CompileConfig:
    # fragment splitting: a repetition over a class with population greater
    # than long_pop_threshold counts as a gap component when its bound exceeds
    # long_count_threshold (or is unbounded).
    long_pop_threshold: int = 128
    long_count_threshold: int = 50

    # filter key extraction
    max_key_prob: float = 1e-4      # keys must be rarer than this under uniform bytes
    max_key_len: int = 8            # longest candidate window considered
    max_expansion: int = 1024       # concrete byte strings a key may expand to
    alt_cap: int = 64               # alternative linearizations per fragment

    # filter bank
    fingerprint_bits: int = 8
    filter_seed: int = 0x5EED
    filter_build_attempts: int = 100

    # automata
    state_cap: int = 1_000_000

    # verification
    record_cap: int = 64

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(data: dict) -> "CompileConfig":
        names = {f.name for f in fields(CompileConfig)}
        return CompileConfig(**{k: v for k, v in data.items() if k in names})
