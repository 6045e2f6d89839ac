"""Reference matcher: straight NFA simulation of the undecomposed pattern.

Ground truth for differential tests. Shares the parser with the engine and
nothing else; the program representation (instruction list with patched
jumps) and the active-set simulation are deliberately plain and slow.
"""
from __future__ import annotations

from dataclasses import dataclass

from .parser import Alt, Atom, Node, Rep, Rule, Seq

_BYTE = 0   # [kind, class mask, next]
_SPLIT = 1  # [kind, next_a, next_b]
_MATCH = 2


class _Prog:
    def __init__(self) -> None:
        self.code: list[list[int]] = []

    def add(self, kind: int, a: int = -1, b: int = -1) -> int:
        self.code.append([kind, a, b])
        return len(self.code) - 1


def _emit(node: Node, prog: _Prog) -> tuple[int, list[tuple[int, int]]]:
    """Compile to instructions; returns (entry, dangling out slots)."""
    if isinstance(node, Atom):
        pc = prog.add(_BYTE, node.cls.mask)
        return pc, [(pc, 2)]
    if isinstance(node, Seq):
        entry = None
        outs: list[tuple[int, int]] = []
        for part in node.parts:
            sub_entry, sub_outs = _emit(part, prog)
            for pc, slot in outs:
                prog.code[pc][slot] = sub_entry
            outs = sub_outs
            if entry is None:
                entry = sub_entry
        if entry is None:  # empty sequence matches nothing consumed
            pc = prog.add(_SPLIT)
            return pc, [(pc, 1), (pc, 2)]
        return entry, outs
    if isinstance(node, Alt):
        entries = []
        outs = []
        for opt in node.options:
            e, o = _emit(opt, prog)
            entries.append(e)
            outs.extend(o)
        entry = entries[0]
        for other in entries[1:]:
            entry = prog.add(_SPLIT, entry, other)
        return entry, outs
    if isinstance(node, Rep):
        entry = None
        outs = []

        def attach(sub_entry: int) -> None:
            nonlocal entry
            for pc, slot in outs:
                prog.code[pc][slot] = sub_entry
            if entry is None:
                entry = sub_entry

        for _ in range(node.lo):
            sub_entry, sub_outs = _emit(node.item, prog)
            attach(sub_entry)
            outs = sub_outs
        if node.hi is None:
            loop = prog.add(_SPLIT)
            sub_entry, sub_outs = _emit(node.item, prog)
            prog.code[loop][1] = sub_entry
            for pc, slot in sub_outs:
                prog.code[pc][slot] = loop
            attach(loop)
            return entry, [(loop, 2)]
        skip_outs: list[tuple[int, int]] = []
        for _ in range(node.hi - node.lo):
            gate = prog.add(_SPLIT)
            sub_entry, sub_outs = _emit(node.item, prog)
            prog.code[gate][1] = sub_entry
            attach(gate)
            skip_outs.append((gate, 2))
            outs = sub_outs
        return entry, outs + skip_outs
    raise TypeError(f"unknown node {node!r}")


def _compile(tree: Node) -> tuple[list[list[int]], int, int]:
    prog = _Prog()
    entry, outs = _emit(tree, prog)
    match = prog.add(_MATCH)
    for pc, slot in outs:
        prog.code[pc][slot] = match
    return prog.code, entry, match


@dataclass(frozen=True)
class OracleResult:
    rule_id: int
    ends: tuple[int, ...]  # sorted 0-based offsets of match-final bytes

    def __bool__(self) -> bool:
        return bool(self.ends)


def oracle_match(rule: Rule, data: bytes) -> OracleResult:
    """Every offset where some non-empty match of the rule ends.

    Unanchored-search semantics: matches may start anywhere unless the rule
    was anchored with `^`; a trailing `$` keeps only matches ending at the
    last byte.
    """
    code, entry, match = _compile(rule.tree)

    def closure(pc: int, into: set[int]) -> None:
        stack = [pc]
        while stack:
            p = stack.pop()
            if p in into:
                continue
            into.add(p)
            kind, a, b = code[p]
            if kind == _SPLIT:
                stack.append(a)
                stack.append(b)

    start: set[int] = set()
    closure(entry, start)

    active = set(start)
    ends: list[int] = []
    for i, byte in enumerate(data):
        nxt: set[int] = set()
        for pc in active:
            kind, a, _ = code[pc]
            if kind == _BYTE and (a >> byte) & 1:
                closure(code[pc][2], nxt)
        active = nxt
        if match in active:
            ends.append(i)
        if not rule.anchored_start:
            active |= start
    if rule.anchored_end:
        ends = [e for e in ends if e == len(data) - 1]
    return OracleResult(rule_id=rule.rule_id, ends=tuple(ends))
