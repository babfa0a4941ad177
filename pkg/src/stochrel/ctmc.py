"""Rate kernels, local uniformization and stationary comparison.

Two rate kernels ``Q_i(x, dy) = q_i(x) P_i(x, dy)`` are turned into
probability kernels indexed by pairs ``x = (x1, x2)`` through the common
clock ``qbar(x) = 1 + q1(x1) + q2(x2)``::

    hatP_i(x, .) = q_i(x_i)/qbar(x) P_i(x_i, .) + (1 - q_i(x_i)/qbar(x)) delta_{x_i}

Preservation and the subrelation iteration for jump processes then reduce
to the discrete-time versions applied to the hat kernels at each pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .coupling import Dist, StDecision, format_number, st_related, to_fraction
from .engine import LocalDecider, PairSystem, iterate_subrelation
from .kernels import (
    CouplingKernel,
    Kernel,
    PreservationError,
    PreservationReport,
    SubrelationTrace,
    run_preservation,
    subrelation,
    trace_from_iteration,
)
from .relcore import Relation, RelationError, StateSpace, conjugate_set, space_from_json, space_to_json

__all__ = [
    "RateKernel",
    "UniformizedPair",
    "StationaryError",
    "uniformize",
    "ct_preserves",
    "ct_subset_test",
    "ct_subset_violations",
    "ct_order_test",
    "ct_subrelation",
    "ct_coupling_kernel",
    "stationary",
    "compare_stationary",
    "EXACT_STATIONARY_LIMIT",
]

EXACT_STATIONARY_LIMIT = 2500
SUBSET_TEST_LIMIT = 20


@dataclass(frozen=True, eq=False)
class RateKernel:
    """Jump rates ``q`` and jump kernel ``jump``; ``Q(x, {y}) = q(x) jump(x, y)``."""

    space: StateSpace
    q: tuple
    jump: Kernel

    def __post_init__(self):
        q = tuple(to_fraction(v) for v in self.q)
        if len(q) != len(self.space):
            raise ValueError("one total rate per state required")
        if any(v < 0 for v in q):
            raise ValueError("rates must be nonnegative")
        if self.jump.source != self.space or self.jump.target != self.space:
            raise ValueError("jump kernel must act on the rate kernel's space")
        object.__setattr__(self, "q", q)

    @classmethod
    def from_rates(cls, space: StateSpace, rates) -> "RateKernel":
        """From off-diagonal rates, one ``{j: rate}`` dict (or dense row) per state."""
        q, rows = [], []
        for i, row in enumerate(rates):
            if not isinstance(row, dict):
                row = dict(enumerate(row))
            row = {int(j): to_fraction(v) for j, v in row.items() if int(j) != i}
            if any(v < 0 for v in row.values()):
                raise ValueError(f"negative rate in row {i}")
            total = sum(row.values(), Fraction(0))
            q.append(total)
            rows.append({j: v / total for j, v in row.items() if v} if total else {i: 1})
        return cls(space, tuple(q), Kernel(space, space, tuple(rows)))

    def __len__(self) -> int:
        return len(self.space)

    def rates(self, i: int) -> dict:
        """``{j: Q(i, {j})}`` including a fictitious self-jump rate if present."""
        qi = self.q[i]
        return {j: qi * p for j, p in self.jump.rows[i].items()} if qi else {}

    def rate(self, i: int, j: int) -> Fraction:
        return self.q[i] * self.jump[i, j]

    def to_json(self) -> dict:
        return {
            "space": space_to_json(self.space),
            "q": [format_number(v) for v in self.q],
            "jump_rows": [[format_number(v) for v in row] for row in self.jump.dense()],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RateKernel":
        space = space_from_json(doc["space"])
        if "rates" in doc:
            return cls.from_rates(space, doc["rates"])
        return cls(space, tuple(doc["q"]), Kernel(space, space, tuple(doc["jump_rows"])))


class UniformizedPair:
    """Hat kernels from ``S1 x S2`` to ``S1`` and ``S2`` for a pair of rate kernels."""

    def __init__(self, Q1: RateKernel, Q2: RateKernel):
        self.Q1, self.Q2 = Q1, Q2

    def qbar(self, i: int, j: int) -> Fraction:
        return 1 + self.Q1.q[i] + self.Q2.q[j]

    def _hat(self, Q: RateKernel, own: int, qbar: Fraction) -> dict:
        frac = Q.q[own] / qbar
        row = {j: frac * p for j, p in Q.jump.rows[own].items()} if frac else {}
        row[own] = row.get(own, 0) + 1 - frac
        return dict(sorted((k, v) for k, v in row.items() if v))

    def hat1(self, i: int, j: int) -> dict:
        return self._hat(self.Q1, i, self.qbar(i, j))

    def hat2(self, i: int, j: int) -> dict:
        return self._hat(self.Q2, j, self.qbar(i, j))

    def as_kernels(self) -> tuple[Kernel, Kernel]:
        """Materialized hat kernels over the product space (small spaces only)."""
        n1, n2 = len(self.Q1), len(self.Q2)
        prod = StateSpace(tuple((a, b) for a in self.Q1.space.labels for b in self.Q2.space.labels))
        h1 = tuple(self.hat1(i, j) for i in range(n1) for j in range(n2))
        h2 = tuple(self.hat2(i, j) for i in range(n1) for j in range(n2))
        return Kernel(prod, self.Q1.space, h1), Kernel(prod, self.Q2.space, h2)


def uniformize(Q1: RateKernel, Q2: RateKernel) -> UniformizedPair:
    return UniformizedPair(Q1, Q2)


def _lcm_denominators(values) -> int:
    den = 1
    for v in values:
        d = Fraction(v).denominator
        den = den * d // math.gcd(den, d)
    return den


def ct_system(Q1: RateKernel, Q2: RateKernel) -> PairSystem:
    """Pair system of hat-kernel rows, scaled by ``qbar`` and a common denominator."""
    D = _lcm_denominators(
        [v for Q in (Q1, Q2) for i in range(len(Q)) for v in (Q.q[i], *Q.rates(i).values())]
    )

    def prep(Q):
        supp, base, rest, qD = [], [], [], []
        for i in range(len(Q)):
            r = Q.rates(i)
            targets = [j for j in sorted(r) if j != i and r[j] > 0]
            supp.append((i, *targets))
            base.append(D + int(r.get(i, 0) * D))
            rest.append(tuple(int(r[j] * D) for j in targets))
            qD.append(int(Q.q[i] * D))
        return supp, base, rest, qD

    lsupp, lbase, lrest, q1D = prep(Q1)
    rsupp, rbase, rrest, q2D = prep(Q2)

    def weights(i, j):
        return (lbase[i] + q2D[j],) + lrest[i], (rbase[j] + q1D[i],) + rrest[j]

    return PairSystem(len(Q1), len(Q2), lsupp, rsupp, weights)


def _check(R: Relation, Q1: RateKernel, Q2: RateKernel) -> None:
    if R.left != Q1.space or R.right != Q2.space:
        raise RelationError("rate kernel spaces do not match the relation")


def ct_preserves(R: Relation, Q1: RateKernel, Q2: RateKernel, method: str = "flow") -> PreservationReport:
    """``hatP1(x, .) ~st hatP2(x, .)`` under R for every ``x`` in R."""
    _check(R, Q1, Q2)
    return run_preservation(ct_system(Q1, Q2), R, R, method)


def ct_subset_violations(R: Relation, Q1: RateKernel, Q2: RateKernel) -> list:
    """Related pairs violating the countable-space rate inequalities.

    For each ``x1 ~ x2``: ``Q1(x1, B1) <= Q2(x2, B1->)`` over all B1 with
    ``x1 not in B1`` and ``x2 not in B1->``, and ``Q1(x1, B2<-) >= Q2(x2, B2)``
    over all B2 with ``x1 not in B2<-`` and ``x2 not in B2``.  Returns
    ``[(i, j, side, B)]``.
    """
    _check(R, Q1, Q2)
    n1, n2 = len(Q1), len(Q2)
    if max(n1, n2) > SUBSET_TEST_LIMIT:
        raise RelationError(f"subset test limited to {SUBSET_TEST_LIMIT} states per side")
    right_of = [frozenset(R.partners(a).tolist()) for a in range(n1)]
    left_of = [frozenset(np.flatnonzero(R.bits[:, b]).tolist()) for b in range(n2)]
    out = []
    for x1, x2 in R.pairs():
        r1, r2 = Q1.rates(x1), Q2.rates(x2)
        cand = [b for b in range(n1) if b != x1 and x2 not in right_of[b]]
        bad = None
        for k in range(1, len(cand) + 1):
            for B in combinations(cand, k):
                conj = conjugate_set(R, B, "right")
                if sum(r1.get(b, 0) for b in B) > sum(r2.get(c, 0) for c in conj):
                    bad = ("right", frozenset(B))
                    break
            if bad:
                break
        if bad is None:
            cand = [c for c in range(n2) if c != x2 and x1 not in left_of[c]]
            for k in range(1, len(cand) + 1):
                for B in combinations(cand, k):
                    conj = conjugate_set(R, B, "left")
                    if sum(r1.get(a, 0) for a in conj) < sum(r2.get(c, 0) for c in B):
                        bad = ("left", frozenset(B))
                        break
                if bad:
                    break
        if bad is not None:
            out.append((x1, x2, *bad))
    return out


def ct_subset_test(R: Relation, Q1: RateKernel, Q2: RateKernel) -> bool:
    return not ct_subset_violations(R, Q1, Q2)


def ct_order_test(R: Relation, Q1: RateKernel, Q2: RateKernel) -> bool:
    """Upper/lower-set version of the rate inequalities for an order R on one space."""
    _check(R, Q1, Q2)
    if R.left != R.right:
        raise RelationError("order test needs a relation on a single space")
    n = len(R.left)
    if n > SUBSET_TEST_LIMIT:
        raise RelationError("space too large for set enumeration")
    up = [frozenset(R.partners(a).tolist()) for a in range(n)]
    down = [frozenset(np.flatnonzero(R.bits[:, a]).tolist()) for a in range(n)]
    uppers, lowers = [], []
    for m in range(1, 1 << n):
        B = frozenset(k for k in range(n) if m >> k & 1)
        if all(up[k] <= B for k in B):
            uppers.append(B)
        if all(down[k] <= B for k in B):
            lowers.append(B)
    for x1, x2 in R.pairs():
        r1, r2 = Q1.rates(x1), Q2.rates(x2)
        for B in uppers:
            if x1 not in B and x2 not in B:
                if sum(r1.get(b, 0) for b in B) > sum(r2.get(b, 0) for b in B):
                    return False
        for B in lowers:
            if x1 not in B and x2 not in B:
                if sum(r1.get(b, 0) for b in B) < sum(r2.get(b, 0) for b in B):
                    return False
    return True


def ct_subrelation(
    R: Relation,
    Q1: RateKernel,
    Q2: RateKernel,
    worklist: bool = True,
    method: str = "flow",
    max_steps: int | None = None,
) -> SubrelationTrace:
    """Largest subrelation of R preserved by the two jump processes."""
    _check(R, Q1, Q2)
    result = iterate_subrelation(ct_system(Q1, Q2), R.bits, LocalDecider(method), worklist, max_steps)
    return trace_from_iteration(R, result)


def ct_coupling_kernel(R: Relation, Q1: RateKernel, Q2: RateKernel) -> CouplingKernel:
    """Coupled hat kernel; with rates ``qbar(x)`` it drives a Markovian coupling keeping R invariant."""
    report = ct_preserves(R, Q1, Q2)
    if not report.holds:
        f = report.failures[0]
        raise PreservationError(f.pair, f.decision)
    U = uniformize(Q1, Q2)
    return CouplingKernel(R, R, U.hat1, U.hat2)


# ---------------------------------------------------------------------------
# stationary distributions


class StationaryError(ValueError):
    """No unique stationary distribution."""


@dataclass
class StationaryResult:
    dist: Dist
    approximate: bool
    residual: object


def _generator_columns(model) -> list[dict]:
    """Column ``y`` of the generator as ``{x: G[x, y]}``."""
    n = len(model.space) if isinstance(model, RateKernel) else len(model.source)
    cols: list[dict] = [dict() for _ in range(n)]
    for x in range(n):
        if isinstance(model, RateKernel):
            row = {y: r for y, r in model.rates(x).items() if y != x}
        else:
            row = {y: p for y, p in model.rows[x].items() if y != x}
        out = sum(row.values(), Fraction(0))
        for y, r in row.items():
            cols[y][x] = cols[y].get(x, 0) + r
        if out:
            cols[x][x] = cols[x].get(x, 0) - out
    return cols


def _solve_sparse(rows: list[dict], rhs: list, n: int) -> list:
    """Exact sparse Gaussian elimination; raises StationaryError when singular."""
    rows = [dict(r) for r in rows]
    rhs = list(rhs)
    col_rows: dict = {}
    for r, row in enumerate(rows):
        for c in row:
            col_rows.setdefault(c, set()).add(r)
    used = [False] * len(rows)
    pivots = []
    for c in range(n):
        cands = [r for r in col_rows.get(c, ()) if not used[r]]
        if not cands:
            raise StationaryError("singular system: stationary distribution is not unique")
        p = min(cands, key=lambda r: (len(rows[r]), r))
        used[p] = True
        prow, pv = rows[p], rows[p][c]
        for r in cands:
            if r == p:
                continue
            row = rows[r]
            f = row[c] / pv
            for k, v in prow.items():
                nv = row.get(k, 0) - f * v
                if nv:
                    if k not in row:
                        col_rows.setdefault(k, set()).add(r)
                    row[k] = nv
                elif k in row:
                    del row[k]
                    col_rows[k].discard(r)
            rhs[r] -= f * rhs[p]
        for k in prow:
            col_rows[k].discard(p)
        pivots.append((c, p))
    x = [Fraction(0)] * n
    for c, p in reversed(pivots):
        prow = rows[p]
        acc = rhs[p] - sum(v * x[k] for k, v in prow.items() if k != c)
        x[c] = acc / prow[c]
    return x


def _stationary_float(model, tol: float = 1e-12, max_iter: int = 1_000_000) -> tuple[np.ndarray, float]:
    from scipy import sparse

    cols = _generator_columns(model)
    n = len(cols)
    ii, jj, vv = [], [], []
    for y, col in enumerate(cols):
        for x, v in col.items():
            ii.append(x)
            jj.append(y)
            vv.append(float(v))
    G = sparse.csr_matrix((vv, (ii, jj)), shape=(n, n))
    lam = max(1.0, float(-G.diagonal().min()) * 1.05)
    P = (sparse.identity(n, format="csr") + G / lam).T.tocsr()
    pi = np.full(n, 1.0 / n)
    res = float("inf")
    for _ in range(max_iter):
        nxt = P @ pi
        nxt /= nxt.sum()
        res = float(np.abs(G.T @ nxt).max())
        pi = nxt
        if res < tol:
            break
    return pi, res


def stationary(model, exact: bool | None = None) -> StationaryResult:
    """Stationary distribution of a rate kernel (``pi Q = 0``) or kernel (``pi P = pi``).

    Exact rational elimination up to 2500 states by default, otherwise float
    power iteration with residual tolerance 1e-12 (flagged approximate).
    """
    space = model.space if isinstance(model, RateKernel) else model.source
    n = len(space)
    if exact is None:
        exact = n <= EXACT_STATIONARY_LIMIT
    if not exact:
        pi, res = _stationary_float(model)
        return StationaryResult(Dist(space, tuple(pi.tolist()), exact=False), True, res)
    cols = _generator_columns(model)
    rows = cols[:-1] + [{k: Fraction(1) for k in range(n)}]
    rhs = [Fraction(0)] * (n - 1) + [Fraction(1)]
    x = _solve_sparse(rows, rhs, n)
    if any(v < 0 for v in x):
        raise StationaryError("solution has negative mass")
    residual = [sum(v * x[k] for k, v in col.items()) for col in cols]
    return StationaryResult(Dist(space, tuple(x)), False, max(abs(r) for r in residual))


@dataclass
class StationaryComparison:
    """``status`` reflects the certificate through R*; ``decision`` is the direct check under R."""

    status: str  # "related", "unrelated" or "inconclusive"
    trace: SubrelationTrace
    pi1: Dist
    pi2: Dist
    decision: StDecision
    decision_fixed_point: StDecision | None

    @property
    def related(self) -> bool:
        return self.decision.related

    def to_json(self) -> dict:
        doc = {
            "status": self.status,
            "fixed_point_size": len(self.trace.fixed_point),
            "subrelation_rounds": len(self.trace.removed),
            "related": self.related,
            "pi1": self.pi1.to_json()["mass"],
            "pi2": self.pi2.to_json()["mass"],
            "decision": self.decision.to_json(),
        }
        if self.decision_fixed_point is not None:
            doc["decision_fixed_point"] = self.decision_fixed_point.to_json()
        return doc


def compare_stationary(R: Relation, model1, model2, worklist: bool = True) -> StationaryComparison:
    """Relate stationary laws through the largest preserved subrelation of R.

    The certificate is inconclusive when that subrelation is empty; the
    direct flow check of the two stationary laws under R is always reported.
    """
    if isinstance(model1, RateKernel):
        trace = ct_subrelation(R, model1, model2, worklist=worklist)
    else:
        trace = subrelation(R, model1, model2, worklist=worklist)
    pi1 = stationary(model1).dist
    pi2 = stationary(model2).dist
    dec = st_related(R, pi1, pi2)
    if not trace.fixed_point.nontrivial:
        return StationaryComparison("inconclusive", trace, pi1, pi2, dec, None)
    dec_star = st_related(trace.fixed_point, pi1, pi2)
    if dec_star.related and not dec.related:
        raise AssertionError("related under a subrelation but not under the relation")
    status = "related" if dec_star.related else "unrelated"
    return StationaryComparison(status, trace, pi1, pi2, dec, dec_star)
