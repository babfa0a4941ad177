"""Two parallel queues: independent routing versus join-the-shortest-queue.

Left process (model 1) is the load-balanced system, right process (model 2)
the independent one.  The subrelation iteration started from
``R^sum = {|x| <= |y|}`` is compared with the closed form

    R^(n) = {|x| <= |y| and x1 v x2 <= y1 v y2 + (y1 ^ y2 - n)^+}

on the part of the truncated box that the truncation cannot reach after n
rounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .coupling import to_fraction
from .ctmc import ct_subrelation
from .population import ModelError, PopulationModel, to_rate_kernel
from .relcore import Relation, StateSpace, build_relation

__all__ = [
    "queueing_models",
    "queueing_formula",
    "alpha_relation",
    "alpha_eval",
    "alpha_properties",
    "AlphaReport",
    "QueueingReport",
    "reproduce_queueing",
    "WM_REGION_BOUND",
]

WM_REGION_BOUND = 20


def _rate(value) -> Fraction:
    lam = to_fraction(value)
    if not 0 < lam < 1:
        raise ModelError(f"arrival rate {lam} must lie in (0, 1)")
    return lam


def queueing_models(lam1, lam2, N: int, truncation: str = "box") -> tuple[PopulationModel, PopulationModel]:
    """``(X^LB, X)`` truncated at capacity N; arrivals that would leave the state space are blocked.

    ``truncation="box"`` caps each queue at N (state space ``[0, N]^2``);
    ``truncation="total"`` caps the total ``|x|`` at N (shared buffer).
    """
    l1, l2 = _rate(lam1), _rate(lam2)
    if N < 2:
        raise ModelError("capacity must be at least 2")
    if truncation not in ("box", "total"):
        raise ModelError(f"unknown truncation {truncation!r}")
    total = N if truncation == "total" else None
    box = ((0, N), (0, N))
    service = {"1,0": "ind(x[1] > 0)", "2,0": "ind(x[2] > 0)"}
    lb = PopulationModel(
        2,
        box,
        {
            "0,1": f"({l1 + l2})*ind(x[1] < x[2]) + ({l1})*ind(x[1] == x[2])",
            "0,2": f"({l1 + l2})*ind(x[1] > x[2]) + ({l2})*ind(x[1] == x[2])",
            **service,
        },
        total,
    )
    indep = PopulationModel(2, box, {"0,1": str(l1), "0,2": str(l2), **service}, total)
    return lb, indep


def _arrays(space: StateSpace) -> np.ndarray:
    return np.array(space.labels, dtype=np.int64).reshape(len(space), 2)


def queueing_formula(n: int, left: StateSpace, right: StateSpace | None = None) -> Relation:
    """Closed-form ``R^(n)`` on two planar grids."""
    right = left if right is None else right
    X, Y = _arrays(left), _arrays(right)
    xs, ys = X.sum(1), Y.sum(1)
    xmax = X.max(1)
    bound = Y.max(1) + np.maximum(Y.min(1) - n, 0)
    bits = (xs[:, None] <= ys[None, :]) & (xmax[:, None] <= bound[None, :])
    return Relation(left, right, bits)


def alpha_eval(n: int, x) -> int:
    """``alpha_n(x) = x1 v x2 v (|x| - n)`` on Z^2."""
    x1, x2 = x
    return max(x1, x2, x1 + x2 - n)


def alpha_relation(n: int, left: StateSpace, right: StateSpace | None = None) -> Relation:
    """``{|x| <= |y| and alpha_n(x) <= alpha_n(y)}``; coincides with :func:`queueing_formula`."""
    right = left if right is None else right
    X, Y = _arrays(left), _arrays(right)
    ax = np.maximum(X.max(1), X.sum(1) - n)
    ay = np.maximum(Y.max(1), Y.sum(1) - n)
    bits = (X.sum(1)[:, None] <= Y.sum(1)[None, :]) & (ax[:, None] <= ay[None, :])
    return Relation(left, right, bits)


_E = ((1, 0), (0, 1))


def _add(x, e, s=1):
    return (x[0] + s * e[0], x[1] + s * e[1])


def _alpha_items(n: int, x) -> dict:
    a = alpha_eval
    x1, x2 = x
    tot = x1 + x2
    items = {
        "i": a(n, x) == tot - min(x1, x2, n),
        "ii": all(a(n, _add(x, e, -1)) <= a(n + 1, x) for e in _E),
        "iii": (a(n, _add(x, _E[0])) > a(n, _add(x, _E[1]))) == (x1 > max(x2, tot - n)),
        "iv": (a(n, _add(x, _E[0], -1)) < a(n, _add(x, _E[1], -1))) == (x1 > max(x2, tot - n - 1)),
        "v": all(a(n, _add(x, _E[k])) > a(n, x) for k in range(2) if x[k] == max(x)),
        "vi": all(a(n, _add(x, _E[k], -1)) == a(n + 1, x) for k in range(2) if x[k] == min(x)),
    }
    return items


@dataclass
class AlphaReport:
    lo: int
    hi: int
    n_max: int
    checked: int
    violations: dict  # item -> list of (n, x)

    @property
    def holds(self) -> bool:
        return not any(self.violations.values())

    def to_json(self) -> dict:
        return {
            "grid": [self.lo, self.hi],
            "n_max": self.n_max,
            "points_checked": self.checked,
            "holds": self.holds,
            "violations": {k: [[n, list(x)] for n, x in v] for k, v in sorted(self.violations.items())},
        }


def alpha_properties(grid: tuple[int, int] = (-5, 15), n_max: int = 5) -> AlphaReport:
    """Check the six pointwise properties of ``alpha_n`` on ``[lo, hi]^2`` for ``n = 0..n_max``."""
    lo, hi = grid
    violations: dict = {k: [] for k in ("i", "ii", "iii", "iv", "v", "vi")}
    checked = 0
    for n in range(n_max + 1):
        for x1 in range(lo, hi + 1):
            for x2 in range(lo, hi + 1):
                checked += 1
                for item, ok in _alpha_items(n, (x1, x2)).items():
                    if not ok:
                        violations[item].append((n, (x1, x2)))
    return AlphaReport(lo, hi, n_max, checked, violations)


@dataclass
class QueueingReport:
    lambdas: tuple
    cap: int
    n_max: int
    rows: list  # per n
    wm: dict
    converged: bool
    elapsed: float = field(default=0.0, compare=False)

    @property
    def all_match(self) -> bool:
        return all(r["status"] == "MATCH" for r in self.rows)

    def to_json(self) -> dict:
        return {
            "lambda": [str(l) for l in self.lambdas],
            "cap": self.cap,
            "iters": self.n_max,
            "all_match": self.all_match,
            "iterates": self.rows,
            "fixed_point_vs_weak_majorization": self.wm,
            "iteration_converged": self.converged,
        }


def _pairs_json(space: StateSpace, mask: np.ndarray, limit: int = 10) -> list:
    i, j = np.nonzero(mask)
    return [[list(space.labels[a]), list(space.labels[b])] for a, b in zip(i[:limit].tolist(), j[:limit].tolist())]


def _region(space: StateSpace, bound: int) -> np.ndarray:
    X = _arrays(space)
    inside = X.max(1) <= bound
    return inside[:, None] & inside[None, :]


def reproduce_queueing(lam1, lam2, N: int = 30, n_max: int = 8, worklist: bool = True) -> QueueingReport:
    """Run the subrelation iteration from ``R^sum`` and diff each iterate against the closed form."""
    if N < n_max + 4:
        raise ModelError(f"capacity {N} too small for {n_max} iterations (need N >= n_max + 4)")
    started = time.perf_counter()
    lb, indep = queueing_models(lam1, lam2, N)
    space = lb.space
    R0 = build_relation("sum_leq", space)
    trace = ct_subrelation(R0, to_rate_kernel(lb), to_rate_kernel(indep), worklist=worklist, max_steps=n_max)
    rows = []
    for n in range(n_max + 1):
        computed = trace.iterate(n).bits
        formula = queueing_formula(n, space).bits
        bound = N - n - 1
        safe = _region(space, bound)
        diff = computed != formula
        inside, outside = diff & safe, diff & ~safe
        rows.append(
            {
                "n": n,
                "safe_bound": bound,
                "safe_pairs": int(safe.sum()),
                "computed_pairs_in_safe_region": int((computed & safe).sum()),
                "mismatches": int(inside.sum()),
                "mismatch_examples": _pairs_json(space, inside),
                "outside_mismatches": int(outside.sum()),
                "status": "MATCH" if not inside.any() else "MISMATCH",
            }
        )
    bound = min(WM_REGION_BOUND, N - n_max - 1)
    region = _region(space, bound)
    final = trace.iterate(n_max).bits
    wm = build_relation("weak_majorization", space).bits
    extra = final & ~wm & region
    missing = wm & ~final & region
    wm_doc = {
        "n": n_max,
        "region_bound": bound,
        "equal": not (extra.any() or missing.any()),
        "only_in_iterate": int(extra.sum()),
        "only_in_weak_majorization": int(missing.sum()),
        "examples_only_in_iterate": _pairs_json(space, extra),
    }
    return QueueingReport(
        (to_fraction(lam1), to_fraction(lam2)),
        N,
        n_max,
        rows,
        wm_doc,
        trace.converged,
        time.perf_counter() - started,
    )
