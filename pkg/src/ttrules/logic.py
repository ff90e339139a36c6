"""Truth tables, cubes and two-level (DNF) minimization.

Row ``r`` of a k-input truth table is the patch whose local variable ``j``
equals bit ``j`` of ``r``.  A cube is stored as ``(value, free)`` bit masks:
variables set in ``free`` are unconstrained, the others must equal the
corresponding bit of ``value``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import FanInError, ParameterError

MAX_K = 10


class Cube(NamedTuple):
    k: int
    value: int
    free: int

    @property
    def care(self) -> int:
        return ((1 << self.k) - 1) & ~self.free

    def covers(self, row: int) -> bool:
        return (row & self.care) == self.value

    def rows(self) -> list[int]:
        """All rows covered by the cube, ascending."""
        free_bits = [1 << j for j in range(self.k) if self.free >> j & 1]
        out = []
        for m in range(1 << len(free_bits)):
            r = self.value
            for i, b in enumerate(free_bits):
                if m >> i & 1:
                    r |= b
            out.append(r)
        return sorted(out)

    def literals(self) -> list[tuple[int, int]]:
        """(local variable, required value) for every constrained variable."""
        return [(j, self.value >> j & 1) for j in range(self.k) if not self.free >> j & 1]

    def __str__(self):
        return "".join("-" if self.free >> j & 1 else str(self.value >> j & 1) for j in range(self.k))

    @classmethod
    def from_str(cls, s: str) -> "Cube":
        value = free = 0
        for j, ch in enumerate(s):
            if ch == "-":
                free |= 1 << j
            elif ch == "1":
                value |= 1 << j
            elif ch != "0":
                raise ParameterError(f"bad cube character {ch!r} in {s!r}")
        return cls(len(s), value, free)


def _check_k(k: int) -> None:
    if not 0 <= k <= MAX_K:
        raise FanInError(f"fan-in {k} exceeds the enumeration bound {MAX_K}")


def patch_codes(X, indices) -> np.ndarray:
    """Row index of each sample's patch over ``indices`` (bit j <- indices[j])."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    weights = np.left_shift(1, np.arange(len(indices), dtype=np.int64))
    return X[:, list(indices)].astype(np.int64) @ weights


@dataclass(frozen=True, eq=False)
class TruthTable:
    k: int
    input_indices: tuple[int, ...]
    outputs: np.ndarray  # (2**k,) uint8
    dont_care: np.ndarray  # (2**k,) bool
    origin: int = -1

    def __post_init__(self):
        _check_k(self.k)
        n = 1 << self.k
        if len(self.input_indices) != self.k:
            raise ParameterError("input_indices length must equal k")
        if self.outputs.shape != (n,) or self.dont_care.shape != (n,):
            raise ParameterError(f"outputs and dont_care must have length {n}")

    @property
    def on_set(self) -> list[int]:
        return np.flatnonzero((self.outputs == 1) & ~self.dont_care).tolist()

    @property
    def dc_set(self) -> list[int]:
        return np.flatnonzero(self.dont_care).tolist()

    def agrees_with(self, truth) -> bool:
        care = ~self.dont_care
        return bool(np.array_equal(np.asarray(truth, dtype=np.uint8)[care], self.outputs[care]))


@dataclass(frozen=True)
class DnfFormula:
    """OR of cubes over ``k`` global input bits."""

    k: int
    input_indices: tuple[int, ...]
    cubes: tuple[Cube, ...]
    _truth: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        _check_k(self.k)
        if len(self.input_indices) != self.k:
            raise ParameterError("input_indices length must equal k")
        truth = np.zeros(1 << self.k, dtype=np.uint8)
        for c in self.cubes:
            if c.k != self.k:
                raise ParameterError("cube width differs from formula width")
            truth[c.rows()] = 1
        object.__setattr__(self, "_truth", truth)

    def truth_vector(self) -> np.ndarray:
        return self._truth

    def evaluate(self, X) -> np.ndarray:
        """0/1 value of the formula for every row of ``X`` (global bit vectors)."""
        return self._truth[patch_codes(X, self.input_indices)]

    def is_true(self) -> bool:
        return bool(self._truth.all())

    def is_false(self) -> bool:
        return not self._truth.any()

    def cube_strings(self) -> list[str]:
        return [str(c) for c in self.cubes]

    @classmethod
    def from_strings(cls, input_indices: Sequence[int], cubes: Sequence[str]) -> "DnfFormula":
        k = len(input_indices)
        return cls(k, tuple(int(i) for i in input_indices), tuple(Cube.from_str(s) for s in cubes))


def minterm_dnf(table: TruthTable) -> DnfFormula:
    """Canonical DNF: one full cube per on-set row."""
    return DnfFormula(table.k, table.input_indices, tuple(Cube(table.k, r, 0) for r in table.on_set))


def prime_implicants(k: int, rows) -> set[tuple[int, int]]:
    """Prime implicants, as ``(value, free)`` pairs, of the function true on ``rows``."""
    current = {(int(r), 0) for r in rows}
    primes = set()
    while current:
        by_free = {}
        for v, f in current:
            by_free.setdefault(f, set()).add(v)
        merged, nxt = set(), set()
        for f, values in by_free.items():
            for v in values:
                for j in range(k):
                    bit = 1 << j
                    if f & bit or v & bit:
                        continue
                    if v | bit in values:
                        nxt.add((v, f | bit))
                        merged.add((v, f))
                        merged.add((v | bit, f))
        primes |= current - merged
        current = nxt
    return primes


def minimize_qm(table: TruthTable) -> DnfFormula:
    """Quine-McCluskey primes over on-set and don't-cares, then a greedy cover.

    Essential primes are taken first; the remaining on-set rows are covered
    by repeatedly taking the prime covering the most uncovered rows, ties
    going to the prime whose smallest uncovered row is lowest.
    """
    k = table.k
    on = table.on_set
    if not on:
        return DnfFormula(k, table.input_indices, ())
    primes = sorted(prime_implicants(k, on + table.dc_set), key=lambda p: (p[1], p[0]))
    cubes = [Cube(k, v, f) for v, f in primes]
    on_set = set(on)
    cover = [frozenset(r for r in c.rows() if r in on_set) for c in cubes]

    chosen = []
    covered = set()
    for r in on:
        hits = [i for i, rows in enumerate(cover) if r in rows]
        if len(hits) == 1 and hits[0] not in chosen:
            chosen.append(hits[0])
            covered |= cover[hits[0]]
    while covered != on_set:
        best, best_key = None, None
        for i, rows in enumerate(cover):
            fresh = rows - covered
            if not fresh:
                continue
            key = (-len(fresh), min(fresh), i)
            if best_key is None or key < best_key:
                best, best_key = i, key
        chosen.append(best)
        covered |= cover[best]
    chosen.sort(key=lambda i: (cubes[i].free, cubes[i].value))
    return DnfFormula(k, table.input_indices, tuple(cubes[i] for i in chosen))
