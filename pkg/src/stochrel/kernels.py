"""Discrete-time kernels: preservation, coupling kernels, subrelations.

A pair of kernels ``(P1, P2)`` preserves a relation R when every related
pair of states has related rows.  When it does, a coupling kernel on the
product space that never leaves R can be assembled row by row from the
flow couplings, and the subrelation iteration finds the largest preserved
part of any R.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .coupling import CouplingMatrix, Dist, StDecision, decide_local, format_number, subset_oracle, to_fraction
from .engine import Failure, LocalDecider, PairSystem, check_pairs, iterate_subrelation, scale_rows
from .relcore import (
    Relation,
    RelationError,
    StateSpace,
    conjugate_set,
    format_label,
    induced,
    relation_to_json,
    space_from_json,
    space_to_json,
)

__all__ = [
    "KernelError",
    "PreservationError",
    "Kernel",
    "CouplingKernel",
    "PreservationReport",
    "SubrelationTrace",
    "SeqCoupling",
    "push",
    "preserves",
    "preserves_subset_form",
    "build_coupling_kernel",
    "couple_rows",
    "subrelation",
    "seq_coupling",
    "hidden_markov_check",
    "lumped_kernel",
]


class KernelError(ValueError):
    pass


class PreservationError(ValueError):
    """A coupling kernel was requested for a pair that is not preserved."""

    def __init__(self, pair, decision: StDecision):
        super().__init__(f"rows of pair {pair} are not related; violating set {sorted(decision.violating)}")
        self.pair = pair
        self.decision = decision


@dataclass(frozen=True, eq=False)
class Kernel:
    """Row-stochastic rational matrix with sparse rows ``{target index: mass}``."""

    source: StateSpace
    target: StateSpace
    rows: tuple

    def __post_init__(self):
        if len(self.rows) != len(self.source):
            raise KernelError(f"{len(self.rows)} rows for {len(self.source)} states")
        n = len(self.target)
        rows = []
        for i, row in enumerate(self.rows):
            if not isinstance(row, dict):
                row = {j: v for j, v in enumerate(row)}
            clean = {}
            for j, v in row.items():
                v = to_fraction(v)
                if not 0 <= j < n:
                    raise KernelError(f"row {i}: target index {j} out of range")
                if v < 0:
                    raise KernelError(f"row {i}: negative entry")
                if v:
                    clean[int(j)] = v
            if sum(clean.values()) != 1:
                raise KernelError(f"row {i} sums to {sum(clean.values())}, not 1")
            rows.append(dict(sorted(clean.items())))
        object.__setattr__(self, "rows", tuple(rows))

    @classmethod
    def identity(cls, space: StateSpace) -> "Kernel":
        return cls(space, space, tuple({i: 1} for i in range(len(space))))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Kernel)
            and self.source == other.source
            and self.target == other.target
            and self.rows == other.rows
        )

    def __getitem__(self, ij):
        i, j = ij
        return self.rows[i].get(j, Fraction(0))

    def row_dist(self, i: int) -> Dist:
        return Dist.from_dict(self.target, self.rows[i])

    def dense(self) -> list[list[Fraction]]:
        return [[row.get(j, Fraction(0)) for j in range(len(self.target))] for row in self.rows]

    def compose(self, other: "Kernel") -> "Kernel":
        """Kernel product ``self @ other``."""
        if self.target != other.source:
            raise KernelError("kernel spaces do not chain")
        rows = []
        for row in self.rows:
            out: dict = {}
            for k, p in row.items():
                for j, q in other.rows[k].items():
                    out[j] = out.get(j, 0) + p * q
            rows.append(out)
        return Kernel(self.source, other.target, tuple(rows))

    def to_json(self) -> dict:
        return {
            "from": space_to_json(self.source),
            "to": space_to_json(self.target),
            "rows": [[format_number(v) for v in row] for row in self.dense()],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Kernel":
        source = space_from_json(doc["from"])
        target = space_from_json(doc["to"]) if "to" in doc else source
        return cls(source, target, tuple(doc["rows"]))


def push(mu: Dist, P: Kernel) -> Dist:
    """Distribution of the next state, ``(mu P)(y) = sum_x mu(x) P(x, y)``."""
    if mu.space != P.source:
        raise KernelError("distribution and kernel spaces differ")
    out: dict = {}
    for i, m in enumerate(mu.mass):
        if m:
            for j, p in P.rows[i].items():
                out[j] = out.get(j, 0) + m * p
    return Dist.from_dict(P.target, out)


# ---------------------------------------------------------------------------
# pair systems


def dt_system(P1: Kernel, P2: Kernel) -> PairSystem:
    """Pair system whose rows at ``(i, j)`` are ``P1(i, .)`` and ``P2(j, .)``."""
    lsupp = [tuple(row) for row in P1.rows]
    rsupp = [tuple(row) for row in P2.rows]

    def scaled(row):
        den = 1
        for v in row.values():
            den = den * v.denominator // math.gcd(den, v.denominator)
        return tuple(int(v * den) for v in row.values()), den

    left = [scaled(row) for row in P1.rows]
    right = [scaled(row) for row in P2.rows]

    def weights(i, j):
        (a, d1), (b, d2) = left[i], right[j]
        if d1 == d2:
            return a, b
        L = d1 * d2 // math.gcd(d1, d2)
        return tuple(v * (L // d1) for v in a), tuple(v * (L // d2) for v in b)

    # padding indexes the target relation, so sizes are target sizes
    return PairSystem(len(P1.target), len(P2.target), lsupp, rsupp, weights)


@dataclass
class PreservationReport:
    holds: bool
    failures: list  # list[Failure]
    checked: int
    relation: Relation
    target: Relation

    def failing_pairs(self) -> list[tuple[int, int]]:
        return [f.pair for f in self.failures]

    def to_json(self) -> dict:
        return {
            "preserved": self.holds,
            "checked_pairs": self.checked,
            "failures": [_failure_json(f, self.relation, self.target) for f in self.failures],
        }


def _lab(space: StateSpace, k: int):
    lab = space.labels[k]
    return lab if isinstance(lab, int) else format_label(lab)


def _failure_json(f: Failure, R: Relation, target: Relation) -> dict:
    d = f.decision
    doc = {
        "pair": [f.i, f.j],
        "labels": [_lab(R.left, f.i), _lab(R.right, f.j)],
        "violating_set": sorted(d.violating),
        "violating_labels": [_lab(target.left, k) for k in sorted(d.violating)],
    }
    if d.gap is not None:
        doc["mu_B"], doc["nu_B_right"] = (format_number(g) for g in d.gap)
    return doc


def run_preservation(system: PairSystem, R: Relation, target: Relation, method: str = "flow", tol: float = 0) -> PreservationReport:
    pi, pj = np.nonzero(R.bits)
    failures = check_pairs(system, target.bits, pi, pj, LocalDecider(method, tol))
    failures.sort(key=lambda f: (f.i, f.j))
    return PreservationReport(not failures, failures, len(pi), R, target)


def _check_kernel_spaces(R: Relation, target: Relation, P1: Kernel, P2: Kernel) -> None:
    if P1.source != R.left or P2.source != R.right:
        raise KernelError("kernel sources do not match the relation's spaces")
    if P1.target != target.left or P2.target != target.right:
        raise KernelError("kernel targets do not match the target relation's spaces")


def preserves(R: Relation, P1: Kernel, P2: Kernel, target: Relation | None = None, method: str = "flow") -> PreservationReport:
    """Check ``x1 ~ x2  =>  P1(x1, .) ~st P2(x2, .)`` (under ``target``, default R)."""
    target = R if target is None else target
    _check_kernel_spaces(R, target, P1, P2)
    return run_preservation(dt_system(P1, P2), R, target, method)


def preserves_subset_form(R: Relation, P1: Kernel, P2: Kernel, target: Relation | None = None) -> bool:
    """``P1(x1, B) <= P2(x2, B->)`` for all related pairs and all subsets B (small spaces)."""
    target = R if target is None else target
    _check_kernel_spaces(R, target, P1, P2)
    return all(subset_oracle(target, P1.row_dist(i), P2.row_dist(j)) for i, j in R.pairs())


# ---------------------------------------------------------------------------
# coupling kernels


def couple_rows(target_bits: np.ndarray, row1: dict, row2: dict):
    """Flow coupling of two sparse rows supported in ``target_bits``.

    Returns ``(entries, None)`` with ``entries[(a, b)]`` the joint mass, or
    ``(None, violating)`` with a violating set of left states.
    """
    supp1, supp2 = list(row1), list(row2)
    lw, rw = scale_rows(row1, row2, supp1, supp2)
    pos2 = {b: k for k, b in enumerate(supp2)}
    allowed = [[pos2[b] for b in np.flatnonzero(target_bits[a]).tolist() if b in pos2] for a in supp1]
    related, flow, cut = decide_local(lw, rw, allowed)
    if not related:
        return None, frozenset(supp1[a] for a in cut)
    total = sum(lw)
    return {(supp1[a], supp2[b]): Fraction(f, total) for (a, b), f in sorted(flow.items())}, None


def _product_row(row1: dict, row2: dict) -> dict:
    return {(a, b): p * q for a, p in row1.items() for b, q in row2.items()}


class _ExactSampler:
    """Exact sampling from a finite rational distribution with a ``random.Random``."""

    def __init__(self, entries: dict):
        den = 1
        for v in entries.values():
            den = den * v.denominator // math.gcd(den, v.denominator)
        self.keys = list(entries)
        acc, cum = 0, []
        for v in entries.values():
            acc += int(v * den)
            cum.append(acc)
        self.cum, self.den = cum, den

    def draw(self, rng: random.Random):
        u = rng.randrange(self.den)
        lo, hi = 0, len(self.cum) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.cum[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        return self.keys[lo]


class CouplingKernel:
    """Kernel on the product space whose rows couple two row families.

    Rows at related pairs are flow couplings supported in the target
    relation; elsewhere they are product couplings.  Rows are built lazily.
    """

    def __init__(self, relation: Relation, target: Relation, row1: Callable, row2: Callable):
        self.relation = relation
        self.target = target
        self._row1 = row1
        self._row2 = row2
        self._rows: dict = {}
        self._samplers: dict = {}

    def marginal_rows(self, i: int, j: int) -> tuple[dict, dict]:
        return self._row1(i, j), self._row2(i, j)

    def row(self, i: int, j: int) -> dict:
        key = (i, j)
        if key not in self._rows:
            r1, r2 = self.marginal_rows(i, j)
            if self.relation.bits[i, j]:
                entries, violating = couple_rows(self.target.bits, r1, r2)
                if entries is None:
                    raise PreservationError(key, StDecision(False, violating=violating))
                self._rows[key] = entries
            else:
                self._rows[key] = _product_row(r1, r2)
        return self._rows[key]

    def check_row(self, i: int, j: int) -> bool:
        """Exact marginals, and mass one on the target when ``(i, j)`` is related."""
        row = self.row(i, j)
        r1, r2 = self.marginal_rows(i, j)
        m1: dict = {}
        m2: dict = {}
        for (a, b), v in row.items():
            if v < 0:
                return False
            m1[a] = m1.get(a, 0) + v
            m2[b] = m2.get(b, 0) + v
        if m1 != {a: v for a, v in r1.items() if v} or m2 != {b: v for b, v in r2.items() if v}:
            return False
        if self.relation.bits[i, j]:
            return sum(v for (a, b), v in row.items() if self.target.bits[a, b]) == 1
        return True

    def simulate(self, start: tuple[int, int], steps: int, rng: random.Random) -> list[tuple[int, int]]:
        """Path of the coupled chain (jump chain for rate kernels)."""
        path = [start]
        state = start
        for _ in range(steps):
            sampler = self._samplers.get(state)
            if sampler is None:
                sampler = self._samplers[state] = _ExactSampler(self.row(*state))
            state = sampler.draw(rng)
            path.append(state)
        return path


def build_coupling_kernel(R: Relation, target: Relation | None, P1: Kernel, P2: Kernel) -> CouplingKernel:
    """Coupling of ``P1`` and ``P2`` putting mass one on ``target`` from every pair of R.

    Raises :class:`PreservationError` naming a violating pair when the
    kernels do not preserve ``R -> target``.
    """
    target = R if target is None else target
    _check_kernel_spaces(R, target, P1, P2)
    report = preserves(R, P1, P2, target)
    if not report.holds:
        f = report.failures[0]
        raise PreservationError(f.pair, f.decision)
    return CouplingKernel(R, target, lambda i, j: P1.rows[i], lambda i, j: P2.rows[j])


# ---------------------------------------------------------------------------
# subrelation


@dataclass
class SubrelationTrace:
    """Decreasing relations ``R^(0) > R^(1) > ... > R*`` with removal witnesses."""

    steps: list  # list[Relation]
    removed: list  # per round: list[Failure]
    converged: bool
    checks: list = field(default_factory=list)

    @property
    def fixed_point(self) -> Relation:
        return self.steps[-1]

    def iterate(self, n: int) -> Relation:
        """``R^(n)``; past convergence the sequence stays at the fixed point."""
        if n < len(self.steps):
            return self.steps[n]
        if not self.converged:
            raise IndexError(f"iterate {n} not computed (stopped after {len(self.steps) - 1} rounds)")
        return self.steps[-1]

    def same_as(self, other: "SubrelationTrace") -> bool:
        return (
            len(self.steps) == len(other.steps)
            and all(a == b for a, b in zip(self.steps, other.steps))
            and [[f.pair for f in r] for r in self.removed] == [[f.pair for f in r] for r in other.removed]
        )

    def to_json(self) -> dict:
        R0 = self.steps[0]
        return {
            "converged": self.converged,
            "rounds": len(self.removed),
            "sizes": [len(s) for s in self.steps],
            "initial": relation_to_json(R0),
            "removed": [[_failure_json(f, R0, R0) for f in rnd] for rnd in self.removed],
            "fixed_point_pairs": [[i, j] for i, j in self.fixed_point.pairs()],
        }


def trace_from_iteration(R: Relation, result) -> SubrelationTrace:
    steps = [R.with_bits(b) for b in result.steps]
    return SubrelationTrace(steps, result.removed, result.converged, result.checks)


def subrelation(
    R: Relation,
    P1: Kernel,
    P2: Kernel,
    worklist: bool = True,
    method: str = "flow",
    max_steps: int | None = None,
) -> SubrelationTrace:
    """Largest subrelation of R preserved by ``(P1, P2)``, with the full trace."""
    _check_kernel_spaces(R, R, P1, P2)
    result = iterate_subrelation(dt_system(P1, P2), R.bits, LocalDecider(method), worklist, max_steps)
    return trace_from_iteration(R, result)


# ---------------------------------------------------------------------------
# sequences


class SeqCouplingError(ValueError):
    def __init__(self, histories, violating):
        super().__init__(f"conditional rows not related at histories {histories}")
        self.histories = histories
        self.violating = violating


@dataclass
class SeqCoupling:
    """Joint law of coupled paths ``((x1, y1), ..., (xh, yh))``."""

    relation: Relation
    law: dict

    def marginal(self, side: int) -> dict:
        out: dict = {}
        for path, p in self.law.items():
            key = tuple(z[side] for z in path)
            out[key] = out.get(key, 0) + p
        return out

    def mass_in_relation(self):
        bits = self.relation.bits
        return sum(p for path, p in self.law.items() if all(bits[a, b] for a, b in path))

    def sample(self, rng: random.Random) -> tuple:
        return _ExactSampler(self.law).draw(rng)


MAX_HISTORY_HORIZON = 4


def seq_coupling(R: Relation, initial: CouplingMatrix, step1, step2, horizon: int) -> SeqCoupling:
    """Couple two sequences with all coordinates related.

    ``step1``/``step2`` are Kernels (Markov case, history = last state) or
    callables mapping a history tuple to a sparse row; general histories
    are limited to horizon 4.  ``initial`` must be supported in R.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    markov = isinstance(step1, Kernel) and isinstance(step2, Kernel)
    if not markov and horizon > MAX_HISTORY_HORIZON:
        raise ValueError(f"history-dependent coupling limited to horizon {MAX_HISTORY_HORIZON}")
    if any(not R.bits[i, j] for i, j in initial.entries):
        raise RelationError("initial coupling is not supported in the relation")
    f1 = (lambda h: step1.rows[h[-1]]) if isinstance(step1, Kernel) else step1
    f2 = (lambda h: step2.rows[h[-1]]) if isinstance(step2, Kernel) else step2
    law = {((i, j),): p for (i, j), p in initial.entries.items() if p}
    memo: dict = {}
    for _ in range(horizon - 1):
        nxt: dict = {}
        for path, p in law.items():
            h1 = tuple(z[0] for z in path)
            h2 = tuple(z[1] for z in path)
            key = (h1[-1], h2[-1]) if markov else (h1, h2)
            if key not in memo:
                entries, violating = couple_rows(R.bits, f1(h1), f2(h2))
                if entries is None:
                    raise SeqCouplingError((h1, h2), violating)
                memo[key] = entries
            for z, c in memo[key].items():
                new = path + (z,)
                nxt[new] = nxt.get(new, 0) + p * c
        law = nxt
    return SeqCoupling(R, law)


def path_law(mu: Dist, P: Kernel, horizon: int) -> dict:
    """Law of ``(X1, ..., Xh)`` for a Markov chain, by enumeration."""
    law = {(i,): m for i, m in enumerate(mu.mass) if m}
    for _ in range(horizon - 1):
        nxt = {}
        for path, p in law.items():
            for j, q in P.rows[path[-1]].items():
                nxt[path + (j,)] = p * q
        law = nxt
    return law


# ---------------------------------------------------------------------------
# hidden Markov


@dataclass
class HiddenMarkovReport:
    induced: Relation
    preservation: PreservationReport
    direct_test: bool | None

    @property
    def holds(self) -> bool:
        return self.preservation.holds

    def to_json(self) -> dict:
        return {
            "preserved": self.holds,
            "direct_test": self.direct_test,
            "induced_pairs": len(self.induced),
            "preservation": self.preservation.to_json(),
        }


def hidden_markov_check(R: Relation, f1: Sequence[int], f2: Sequence[int], P1: Kernel, P2: Kernel) -> HiddenMarkovReport:
    """Preservation of the relation induced from R by the observation maps.

    ``f1[x]`` gives the index in ``R.left`` observed from hidden state x of
    ``P1`` (likewise ``f2``).  The direct set inequality
    ``P1(x1, f1^-1(B)) <= P2(x2, f2^-1(B->))`` is also evaluated when
    ``R.left`` has at most 12 states.
    """
    Rp = induced(R, f1, f2, P1.source, P2.source)
    report = preserves(Rp, P1, P2)
    direct = None
    n = len(R.left)
    if n <= 12:
        direct = True
        pre1 = [[x for x in range(len(P1.source)) if f1[x] == s] for s in range(n)]
        pre2 = [[x for x in range(len(P2.source)) if f2[x] == s] for s in range(len(R.right))]
        subsets = [frozenset(c) for k in range(1, n + 1) for c in combinations(range(n), k)]
        conj = {B: conjugate_set(R, B, "right") for B in subsets}
        for x1, x2 in Rp.pairs():
            for B in subsets:
                lhs = sum(P1[x1, x] for s in B for x in pre1[s])
                rhs = sum(P2[x2, y] for s in conj[B] for y in pre2[s])
                if lhs > rhs:
                    direct = False
                    break
            if not direct:
                break
    return HiddenMarkovReport(Rp, report, direct)


def lumped_kernel(P: Kernel, f: Sequence[int], lumped: StateSpace) -> Kernel:
    """Kernel of ``f(X)`` when ``X`` is lumpable with respect to ``f``."""
    rows: list = [None] * len(lumped)
    for x in range(len(P.source)):
        row: dict = {}
        for y, p in P.rows[x].items():
            row[f[y]] = row.get(f[y], 0) + p
        s = f[x]
        if rows[s] is None:
            rows[s] = row
        elif rows[s] != row:
            raise KernelError(f"not lumpable: states in fiber {s} have different lumped rows")
    if any(r is None for r in rows):
        raise KernelError("observation map is not onto")
    return Kernel(lumped, lumped, tuple(rows))
