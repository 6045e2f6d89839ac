"""Prefiltered regex scanning: xor-filter triggers, anchored fragment DFAs,
and semantic gap verification."""
from .config import CompileConfig
from .engine import CompiledDatabase, compile_rules, scan_corpus, scan_packet

__version__ = "0.1.0"

__all__ = [
    "CompileConfig",
    "CompiledDatabase",
    "compile_rules",
    "scan_corpus",
    "scan_packet",
    "__version__",
]
