"""Reduced ordered binary decision diagrams over global input bits.

A :class:`BddStore` is an arena of ``(level, low, high)`` triples made
canonical by a unique table: no node has ``low == high`` and no triple is
stored twice, so two functions built in the same store are equal exactly
when their refs are equal.  Without an explicit order the level of a
variable is its global bit index.
"""
from __future__ import annotations

import itertools
from typing import Mapping, NamedTuple, Sequence

from .errors import OrderError, ParameterError, StoreError
from .logic import DnfFormula, TruthTable

FALSE, TRUE = 0, 1
_TERMINAL_LEVEL = float("inf")
_OPS = ("AND", "OR", "XOR")
_store_ids = itertools.count()


class Ref(NamedTuple):
    store: int
    node: int


class BddStore:
    def __init__(self, order: Sequence[int] | None = None):
        self.id = next(_store_ids)
        self._level = [_TERMINAL_LEVEL, _TERMINAL_LEVEL]
        self._low = [-1, -1]
        self._high = [-1, -1]
        self._unique: dict[tuple[int, int, int], int] = {}
        self._memo: dict[tuple[str, int, int], int] = {}
        self.order = list(order) if order is not None else None
        self._level_of = {b: i for i, b in enumerate(self.order)} if self.order is not None else None

    # -- refs --------------------------------------------------------------

    @property
    def false(self) -> Ref:
        return Ref(self.id, FALSE)

    @property
    def true(self) -> Ref:
        return Ref(self.id, TRUE)

    def _own(self, ref: Ref) -> int:
        if not isinstance(ref, Ref) or ref.store != self.id:
            raise StoreError("ref belongs to a different store")
        return ref.node

    def __len__(self):
        """Number of decision nodes in the arena."""
        return len(self._level) - 2

    def level(self, bit: int) -> int:
        if self._level_of is None:
            return int(bit)
        try:
            return self._level_of[bit]
        except KeyError:
            raise OrderError(f"bit {bit} is not in the variable order") from None

    def bit_at(self, level: int) -> int:
        return level if self.order is None else self.order[level]

    def node(self, ref: Ref) -> tuple[int, Ref, Ref]:
        """(global bit, low ref, high ref) of a decision node."""
        u = self._own(ref)
        if u < 2:
            raise ParameterError("terminal nodes have no variable")
        return self.bit_at(self._level[u]), Ref(self.id, self._low[u]), Ref(self.id, self._high[u])

    # -- construction ------------------------------------------------------

    def _mk(self, level: int, low: int, high: int) -> int:
        if low == high:
            return low
        key = (level, low, high)
        u = self._unique.get(key)
        if u is None:
            u = len(self._level)
            self._level.append(level)
            self._low.append(low)
            self._high.append(high)
            self._unique[key] = u
        return u

    def var(self, bit: int) -> Ref:
        return Ref(self.id, self._mk(self.level(bit), FALSE, TRUE))

    def cube(self, literals: Mapping[int, int]) -> Ref:
        """Conjunction of ``bit == value`` literals."""
        u = TRUE
        for level, value in sorted(((self.level(b), v) for b, v in literals.items()), reverse=True):
            u = self._mk(level, FALSE, u) if value else self._mk(level, u, FALSE)
        return Ref(self.id, u)

    def apply(self, op: str, a: Ref, b: Ref) -> Ref:
        if op not in _OPS:
            raise ParameterError(f"unknown operation {op!r}")
        return Ref(self.id, self._apply(op, self._own(a), self._own(b)))

    def _apply(self, op: str, a: int, b: int) -> int:
        if op == "AND":
            if a == FALSE or b == FALSE:
                return FALSE
            if a == TRUE or a == b:
                return b
            if b == TRUE:
                return a
        elif op == "OR":
            if a == TRUE or b == TRUE:
                return TRUE
            if a == FALSE or a == b:
                return b
            if b == FALSE:
                return a
        else:
            if a == b:
                return FALSE
            if a == FALSE:
                return b
            if b == FALSE:
                return a
        if a > b:
            a, b = b, a
        key = (op, a, b)
        r = self._memo.get(key)
        if r is not None:
            return r
        la, lb = self._level[a], self._level[b]
        level = min(la, lb)
        a0, a1 = (self._low[a], self._high[a]) if la == level else (a, a)
        b0, b1 = (self._low[b], self._high[b]) if lb == level else (b, b)
        r = self._mk(level, self._apply(op, a0, b0), self._apply(op, a1, b1))
        self._memo[key] = r
        return r

    def negate(self, a: Ref) -> Ref:
        return self.apply("XOR", a, self.true)

    def clear_memo(self) -> None:
        self._memo.clear()

    # -- inspection --------------------------------------------------------

    def reachable(self, ref: Ref) -> list[int]:
        """Decision nodes reachable from ``ref``, sorted by (level, id)."""
        seen, stack = set(), [self._own(ref)]
        while stack:
            u = stack.pop()
            if u < 2 or u in seen:
                continue
            seen.add(u)
            stack.extend((self._low[u], self._high[u]))
        return sorted(seen, key=lambda u: (self._level[u], u))

    def node_count(self, ref: Ref) -> int:
        return len(self.reachable(ref))

    def check_invariants(self) -> None:
        """Assert reduction, uniqueness and ordering over the whole arena."""
        if len(self._unique) != len(self):
            raise AssertionError("unique table and arena differ in size")
        for key, u in self._unique.items():
            level, low, high = key
            if (self._level[u], self._low[u], self._high[u]) != key:
                raise AssertionError(f"unique table entry {key} points at a different node")
            if low == high:
                raise AssertionError(f"node {u} has identical children")
            if not (level < self._level[low] and level < self._level[high]):
                raise AssertionError(f"node {u} violates the variable order")


def build_from_dnf(store: BddStore, dnf: DnfFormula) -> Ref:
    """OR of the cube BDDs of ``dnf``."""
    for bit in dnf.input_indices:
        store.level(bit)
    acc = store.false
    for c in dnf.cubes:
        lits = {dnf.input_indices[j]: v for j, v in c.literals()}
        acc = store.apply("OR", acc, store.cube(lits))
    return acc


def build_from_minterms(store: BddStore, k: int, input_indices: Sequence[int], rows) -> Ref:
    acc = store.false
    for r in rows:
        lits = {input_indices[j]: r >> j & 1 for j in range(k)}
        acc = store.apply("OR", acc, store.cube(lits))
    return acc


def apply(store: BddStore, op: str, a: Ref, b: Ref) -> Ref:
    return store.apply(op, a, b)


def bdd_eval(store: BddStore, ref: Ref, assignment) -> int:
    """Follow low/high edges; ``assignment`` maps (or indexes) global bit -> 0/1."""
    u = store._own(ref)
    while u >= 2:
        bit = store.bit_at(store._level[u])
        u = store._high[u] if assignment[bit] else store._low[u]
    return u


def check_equivalence(store: BddStore, ref: Ref, table: TruthTable) -> bool:
    for r in range(1 << table.k):
        if table.dont_care[r]:
            continue
        assignment = {b: r >> j & 1 for j, b in enumerate(table.input_indices)}
        if bdd_eval(store, ref, assignment) != table.outputs[r]:
            return False
    return True


def _quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _dot_body(store: BddStore, ref: Ref, bit_names, prefix: str = "") -> list[str]:
    root = store._own(ref)
    nodes = store.reachable(ref)
    lines = []
    terminals = sorted({c for u in nodes for c in (store._low[u], store._high[u]) if c < 2} or {root})
    for t in terminals:
        lines.append(f'  {prefix}t{t} [label="{t}", shape=box, style=bold];')
    name = (lambda u: f"{prefix}t{u}" if u < 2 else f"{prefix}n{u}")
    for u in nodes:
        bit = store.bit_at(store._level[u])
        label = bit_names[bit] if bit_names is not None else f"x{bit}"
        lines.append(f"  {name(u)} [label={_quote(label)}, shape=box];")
    for u in nodes:
        lines.append(f"  {name(u)} -> {name(store._low[u])} [dir=both, arrowtail=odot];")
        lines.append(f"  {name(u)} -> {name(store._high[u])};")
    return lines


def to_dot(store: BddStore, ref: Ref, bit_names=None, title: str = "bdd") -> str:
    """Graphviz text; hollow-dot tail marks the edge taken when the bit is 0."""
    lines = [f"digraph {_quote(title)} {{"] + _dot_body(store, ref, bit_names) + ["}"]
    return "\n".join(lines) + "\n"


def ruleset_to_dot(store: BddStore, named_refs, bit_names=None, title: str = "rules") -> str:
    """One graph with a cluster per ``(name, ref)`` pair."""
    lines = [f"digraph {_quote(title)} {{"]
    for i, (name, ref) in enumerate(named_refs):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f"    label={_quote(name)};")
        lines.extend("  " + ln for ln in _dot_body(store, ref, bit_names, prefix=f"c{i}_"))
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
