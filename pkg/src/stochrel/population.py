"""Markov population processes on truncated integer boxes.

Individuals move by ``x -> x + e_{i,j}`` (``e_0 = 0``, ``e_{i,j} = -e_i + e_j``)
at rate ``alpha_{i,j}(x)``; index 0 is the outside world.  Transitions that
would leave the box get rate 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Mapping

import numpy as np

from .ctmc import RateKernel, ct_preserves
from .relcore import Relation, RelationError, StateSpace
from .rateexpr import parse_rate, pretty

__all__ = [
    "ModelError",
    "PopulationModel",
    "PopulationReport",
    "to_rate_kernel",
    "population_check",
    "partial_order_check",
    "SUBSET_MAX_M",
]

SUBSET_MAX_M = 3


class ModelError(ValueError):
    pass


def _parse_key(key) -> tuple[int, int]:
    if isinstance(key, str):
        parts = key.split(",")
        if len(parts) != 2:
            raise ModelError(f"rate key {key!r} must look like 'i,j'")
        return int(parts[0]), int(parts[1])
    i, j = key
    return int(i), int(j)


@dataclass(frozen=True, eq=False)
class PopulationModel:
    """Colony count ``m``, box ``[[lo, hi], ...]`` and rate expressions keyed by ``(i, j)``.

    ``total_cap`` optionally cuts the box down to states with coordinate sum
    at most ``total_cap`` (a shared buffer); moves leaving it are blocked too.
    """

    m: int
    box: tuple
    rates: Mapping
    total_cap: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        box = tuple((int(lo), int(hi)) for lo, hi in self.box)
        if len(box) != self.m:
            raise ModelError(f"box has {len(box)} coordinates, expected {self.m}")
        if any(lo > hi for lo, hi in box):
            raise ModelError(f"empty box {box}")
        rates = {}
        for key, expr in self.rates.items():
            i, j = _parse_key(key)
            if i == j or not (0 <= i <= self.m and 0 <= j <= self.m):
                raise ModelError(f"invalid transition index pair ({i}, {j})")
            rates[(i, j)] = parse_rate(expr) if isinstance(expr, str) else expr
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "rates", dict(sorted(rates.items())))
        for x in self.space.labels:
            for (i, j), node in self.rates.items():
                if node.eval(x) < 0:
                    raise ModelError(f"rate alpha_{i},{j} is negative at {x}")

    @property
    def space(self) -> StateSpace:
        if "space" not in self._cache:
            space = StateSpace.grid(self.box)
            if self.total_cap is not None:
                space = StateSpace(tuple(x for x in space.labels if sum(x) <= self.total_cap))
            self._cache["space"] = space
        return self._cache["space"]

    def index_pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.m + 1) for j in range(self.m + 1) if i != j]

    def shift(self, x: tuple, i: int, j: int) -> tuple:
        y = list(x)
        if i:
            y[i - 1] -= 1
        if j:
            y[j - 1] += 1
        return tuple(y)

    def in_box(self, x: tuple) -> bool:
        if self.total_cap is not None and sum(x) > self.total_cap:
            return False
        return all(lo <= c <= hi for c, (lo, hi) in zip(x, self.box))

    def rate(self, x: tuple, i: int, j: int) -> Fraction:
        """Effective rate of ``x -> x + e_{i,j}``; zero when the target leaves the box."""
        node = self.rates.get((i, j))
        if node is None or not self.in_box(self.shift(x, i, j)):
            return Fraction(0)
        return node.eval(x)

    def to_json(self) -> dict:
        doc = {
            "m": self.m,
            "box": [list(b) for b in self.box],
            "rates": {f"{i},{j}": pretty(node) for (i, j), node in self.rates.items()},
        }
        if self.total_cap is not None:
            doc["total_cap"] = self.total_cap
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PopulationModel":
        cap = doc.get("total_cap")
        return cls(int(doc["m"]), tuple(doc["box"]), dict(doc["rates"]), None if cap is None else int(cap))


def to_rate_kernel(model: PopulationModel) -> RateKernel:
    """Finite rate kernel on the box; coinciding targets accumulate their rates."""
    if "kernel" in model._cache:
        return model._cache["kernel"]
    space = model.space
    rows = []
    for x in space.labels:
        row: dict = {}
        for i, j in model.index_pairs():
            r = model.rate(x, i, j)
            if r:
                k = space.index(model.shift(x, i, j))
                row[k] = row.get(k, 0) + r
        rows.append(row)
    kernel = RateKernel.from_rates(space, rows)
    model._cache["kernel"] = kernel
    return kernel


@dataclass
class PopulationReport:
    holds: bool
    failures: list  # (i, j, side, index-pair set)
    method: str
    checked: int

    def to_json(self, R: Relation | None = None) -> dict:
        out = []
        for i, j, side, U in self.failures:
            doc = {"pair": [i, j], "side": side, "index_pairs": sorted([list(p) for p in U])}
            if R is not None:
                doc["labels"] = [list(R.left.labels[i]), list(R.right.labels[j])]
            out.append(doc)
        return {"preserved": self.holds, "method": self.method, "checked_pairs": self.checked, "failures": out}


def _check_spaces(R: Relation, model1: PopulationModel, model2: PopulationModel) -> None:
    if R.left != model1.space or R.right != model2.space:
        raise RelationError("relation spaces do not match the model boxes")


def population_check(R: Relation, model1: PopulationModel, model2: PopulationModel) -> PopulationReport:
    """Index-pair form of the preservation test for population processes.

    For every ``x ~ y``: ``sum_U alpha(x) <= sum_{U->(x,y)} alpha'(y)`` for all
    U among the moves of x leaving the partners of y, and the mirrored
    inequality over moves V of y.  Falls back to the uniformized test when
    ``m > 3``.
    """
    _check_spaces(R, model1, model2)
    if max(model1.m, model2.m) > SUBSET_MAX_M:
        rep = ct_preserves(R, to_rate_kernel(model1), to_rate_kernel(model2))
        fails = [(f.i, f.j, "uniformized", frozenset()) for f in rep.failures]
        return PopulationReport(rep.holds, fails, "ct_preserves", rep.checked)
    S1, S2 = model1.space, model2.space
    bits = R.bits
    moves1, moves2 = model1.index_pairs(), model2.index_pairs()
    failures = []
    pairs = R.pairs()
    for xi, yi in pairs:
        x, y = S1.labels[xi], S2.labels[yi]
        t1 = {p: S1.get(model1.shift(x, *p)) for p in moves1}
        t2 = {p: S2.get(model2.shift(y, *p)) for p in moves2}
        a1 = {p: model1.rate(x, *p) for p in moves1}
        a2 = {p: model2.rate(y, *p) for p in moves2}
        # right inequality
        cand = [p for p in moves1 if t1[p] is None or not bits[t1[p], yi]]
        image = {
            p: frozenset(q for q in moves2 if t1[p] is not None and t2[q] is not None and bits[t1[p], t2[q]])
            for p in cand
        }
        bad = None
        for k in range(1, len(cand) + 1):
            for U in combinations(cand, k):
                img = frozenset().union(*(image[p] for p in U))
                if sum(a1[p] for p in U) > sum(a2[q] for q in img):
                    bad = ("right", frozenset(U))
                    break
            if bad:
                break
        if bad is None:
            cand = [q for q in moves2 if t2[q] is None or not bits[xi, t2[q]]]
            image = {
                q: frozenset(p for p in moves1 if t1[p] is not None and t2[q] is not None and bits[t1[p], t2[q]])
                for q in cand
            }
            for k in range(1, len(cand) + 1):
                for V in combinations(cand, k):
                    img = frozenset().union(*(image[q] for q in V))
                    if sum(a1[p] for p in img) < sum(a2[q] for q in V):
                        bad = ("left", frozenset(V))
                        break
                if bad:
                    break
        if bad is not None:
            failures.append((xi, yi, *bad))
    return PopulationReport(not failures, failures, "index_pairs", len(pairs))


def partial_order_check(coords, model1: PopulationModel, model2: PopulationModel) -> PopulationReport:
    """Specialized test for ``x <=_M y`` (``x_i <= y_i`` for the 1-based coordinates in M).

    For every ``x <=_M y`` and ``k`` with ``x_k = y_k``::

        sum_{i in I} alpha_{i,k}(x) <= sum_{i in I u ([0,m'] \\ M0)} alpha'_{i,k}(y)
        sum_{j in J u ([0,m] \\ M0)} alpha_{k,j}(x) >= sum_{j in J} alpha'_{k,j}(y)

    over all I, J not containing k.
    """
    M = sorted(set(int(c) for c in coords))
    if any(not 1 <= c <= min(model1.m, model2.m) for c in M):
        raise RelationError(f"coordinates {M} are not shared by both models")
    S1, S2 = model1.space, model2.space
    X = np.array(S1.labels, dtype=np.int64).reshape(len(S1), -1)
    Y = np.array(S2.labels, dtype=np.int64).reshape(len(S2), -1)
    rel = np.ones((len(S1), len(S2)), dtype=bool)
    for c in M:
        rel &= X[:, c - 1][:, None] <= Y[:, c - 1][None, :]
    m1, m2 = model1.m, model2.m
    failures = []
    pairs = list(zip(*map(lambda a: a.tolist(), np.nonzero(rel))))
    for xi, yi in pairs:
        x, y = S1.labels[xi], S2.labels[yi]
        M0 = {c for c in M if x[c - 1] == y[c - 1]}
        for k in sorted(M0):
            others1 = [i for i in range(m1 + 1) if i != k]
            others2 = [i for i in range(m2 + 1) if i != k]
            free2 = {i for i in others2 if i not in M0}
            free1 = {j for j in others1 if j not in M0}
            bad = None
            for size in range(len(others1) + 1):
                for I in combinations(others1, size):
                    lhs = sum(model1.rate(x, i, k) for i in I)
                    rhs = sum(model2.rate(y, i, k) for i in (set(I) | free2) if i in others2)
                    if lhs > rhs:
                        bad = ("upper", frozenset((i, k) for i in I))
                        break
                if bad:
                    break
            if bad is None:
                for size in range(len(others2) + 1):
                    for J in combinations(others2, size):
                        lhs = sum(model1.rate(x, k, j) for j in (set(J) | free1) if j in others1)
                        rhs = sum(model2.rate(y, k, j) for j in J)
                        if lhs < rhs:
                            bad = ("lower", frozenset((k, j) for j in J))
                            break
                    if bad:
                        break
            if bad is not None:
                failures.append((xi, yi, *bad))
                break
    return PopulationReport(not failures, failures, "partial_order", len(pairs))
