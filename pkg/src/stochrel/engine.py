"""Batch relatedness checks over many state pairs.

Both the discrete-time and the uniformized continuous-time machinery ask
the same question for many pairs ``(i, j)``: are the left row and right row
attached to the pair related under a target relation?  Rows are sparse with
small supports, so each check is a tiny transportation problem.  This
module gathers the relevant relation bits for a whole batch with numpy,
memoizes decisions on the local problem, and drives the subrelation
iteration (full rescan and worklist variants).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .coupling import StDecision, decide_local, oracle_local

__all__ = ["PairSystem", "Failure", "LocalDecider", "check_pairs", "iterate_subrelation"]


@dataclass
class PairSystem:
    """Rows attached to pairs of states.

    ``lsupp[i]`` lists the left-row support for any pair with left index i
    and ``rsupp[j]`` the right-row support for right index j;
    ``weights(i, j)`` returns the row masses on those supports as integers
    with equal totals (or floats in approximate mode).
    """

    n1: int
    n2: int
    lsupp: list
    rsupp: list
    weights: Callable[[int, int], tuple]
    approximate: bool = False

    def __post_init__(self):
        self.k1 = max((len(s) for s in self.lsupp), default=1) or 1
        self.k2 = max((len(s) for s in self.rsupp), default=1) or 1
        LI = np.full((len(self.lsupp), self.k1), -1, dtype=np.int64)
        for i, s in enumerate(self.lsupp):
            LI[i, : len(s)] = s
        RJ = np.full((len(self.rsupp), self.k2), -1, dtype=np.int64)
        for j, s in enumerate(self.rsupp):
            RJ[j, : len(s)] = s
        # padding points at an always-false extra row/column
        LI[LI < 0] = self.n1
        RJ[RJ < 0] = self.n2
        self.LI, self.RJ = LI, RJ

    def gather(self, padded: np.ndarray, pi: np.ndarray, pj: np.ndarray) -> np.ndarray:
        """Local ``k1 x k2`` blocks of a padded ``(n1+1) x (n2+1)`` matrix for each pair."""
        return padded[self.LI[pi][:, :, None], self.RJ[pj][:, None, :]]


def pad(bits: np.ndarray) -> np.ndarray:
    n1, n2 = bits.shape
    out = np.zeros((n1 + 1, n2 + 1), dtype=bool)
    out[:n1, :n2] = bits
    return out


@dataclass
class Failure:
    """A pair whose rows are not related, with the violating left set."""

    i: int
    j: int
    decision: StDecision

    @property
    def pair(self) -> tuple[int, int]:
        return (self.i, self.j)


class LocalDecider:
    """Memoized decisions on local problems ``(weights, relation block)``."""

    def __init__(self, method: str = "flow", tol: float = 0):
        if method not in ("flow", "subset"):
            raise ValueError(f"unknown method {method!r}")
        self.method = method
        self.tol = tol
        self.cache: dict = {}
        self.solved = 0

    def solve(self, lw, rw, block: np.ndarray):
        allowed = [np.flatnonzero(block[a, : len(rw)]).tolist() for a in range(len(lw))]
        local = decide_local if self.method == "flow" else oracle_local
        self.solved += 1
        return local(lw, rw, allowed, self.tol)


def _codes(blocks: np.ndarray) -> list:
    n, k1, k2 = blocks.shape
    flat = blocks.reshape(n, k1 * k2)
    if k1 * k2 <= 62:
        weights = (1 << np.arange(k1 * k2, dtype=np.int64))
        return (flat.astype(np.int64) @ weights).tolist()
    packed = np.packbits(flat, axis=1)
    return [row.tobytes() for row in packed]


def _gap(lw, rw, block, B) -> tuple:
    total = sum(lw)
    conj = set()
    for a in B:
        conj.update(np.flatnonzero(block[a, : len(rw)]).tolist())
    left = sum(lw[a] for a in B)
    right = sum(rw[b] for b in conj)
    if isinstance(total, int):
        return Fraction(left, total), Fraction(right, total)
    return left / total, right / total


def check_pairs(
    system: PairSystem,
    target_bits: np.ndarray,
    pi: np.ndarray,
    pj: np.ndarray,
    decider: LocalDecider,
    batch: int = 200_000,
) -> list[Failure]:
    """Check every pair ``(pi[k], pj[k])`` against the target relation."""
    padded = pad(target_bits)
    failures = []
    method = decider.method
    approx = system.approximate
    cache = decider.cache
    weights = system.weights
    lsupp = system.lsupp
    for start in range(0, len(pi), batch):
        bi = pi[start : start + batch]
        bj = pj[start : start + batch]
        blocks = system.gather(padded, bi, bj)
        codes = _codes(blocks)
        for k, (i, j) in enumerate(zip(bi.tolist(), bj.tolist())):
            lw, rw = weights(i, j)
            key = (lw, rw, codes[k])
            hit = cache.get(key)
            if hit is None:
                related, _, cut = decider.solve(lw, rw, blocks[k])
                hit = cache[key] = (related, None if related else tuple(sorted(cut)))
            if not hit[0]:
                B = hit[1]
                gap = _gap(lw, rw, blocks[k], B)
                violating = frozenset(lsupp[i][a] for a in B)
                failures.append(
                    Failure(i, j, StDecision(False, violating=violating, method=method, approximate=approx, gap=gap))
                )
    return failures


@dataclass
class IterationResult:
    steps: list  # bit matrices R^(0), R^(1), ...
    removed: list  # per round: list[Failure]
    converged: bool
    checks: list = field(default_factory=list)  # pairs examined per round


def iterate_subrelation(
    system: PairSystem,
    start_bits: np.ndarray,
    decider: LocalDecider,
    worklist: bool = True,
    max_steps: int | None = None,
) -> IterationResult:
    """Run ``R <- {x in R : rows of x related under R}`` to a fixed point.

    With ``worklist`` only pairs whose local block lost a member in the last
    round are rechecked; the resulting sequence is identical.
    """
    current = np.array(start_bits, dtype=bool)
    steps = [current.copy()]
    removed: list = []
    checks: list = []
    candidates = current
    while True:
        pi, pj = np.nonzero(candidates)
        checks.append(len(pi))
        fails = check_pairs(system, current, pi, pj, decider)
        if not fails:
            return IterationResult(steps, removed, True, checks)
        if max_steps is not None and len(removed) >= max_steps:
            return IterationResult(steps, removed, False, checks)
        fails.sort(key=lambda f: (f.i, f.j))
        gone = np.zeros_like(current)
        for f in fails:
            gone[f.i, f.j] = True
        current = current & ~gone
        steps.append(current.copy())
        removed.append(fails)
        if worklist:
            si, sj = np.nonzero(current)
            touched = system.gather(pad(gone), si, sj).any(axis=(1, 2))
            candidates = np.zeros_like(current)
            candidates[si[touched], sj[touched]] = True
        else:
            candidates = current


def scale_rows(row1: dict, row2: dict, supp1: Sequence[int], supp2: Sequence[int]) -> tuple:
    """Integer masses proportional to two rational rows over a common denominator."""
    den = 1
    for v in (*row1.values(), *row2.values()):
        d = Fraction(v).denominator
        den = den * d // math.gcd(den, d)
    lw = tuple(int(row1[a] * den) for a in supp1)
    rw = tuple(int(row2[b] * den) for b in supp2)
    return lw, rw
