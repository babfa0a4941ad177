"""Deciding whether two distributions are stochastically related.

``mu ~st nu`` under a relation R holds when some coupling of ``mu`` and
``nu`` puts all its mass on R.  On finite spaces this is a transportation
feasibility question, decided exactly by max flow; a minimum cut yields a
set B with ``mu(B) > nu(B->)`` whenever no such coupling exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

from .flow import transport_flow
from .relcore import (
    RealFn,
    Relation,
    RelationError,
    StateSpace,
    conjugate_fn,
    conjugate_set,
    format_label,
    space_from_json,
    space_to_json,
)

__all__ = [
    "DistError",
    "Dist",
    "CouplingMatrix",
    "StDecision",
    "to_fraction",
    "st_related",
    "subset_oracle",
    "subset_violation",
    "functional_test",
    "upper_set_test",
    "decide_local",
    "oracle_local",
    "FLOAT_TOL",
]

FLOAT_TOL = 1e-9
ORACLE_MAX_STATES = 20


class DistError(ValueError):
    """Raised for invalid probability vectors."""


def to_fraction(value, exact: bool = True):
    """Parse ``"p/q"`` strings, ints and Fractions; floats only when ``exact`` is off."""
    if isinstance(value, bool):
        raise DistError(f"not a number: {value!r}")
    if isinstance(value, float):
        if exact:
            raise DistError(f"float literal {value!r} not allowed in exact mode")
        return value
    if isinstance(value, str):
        text = value.strip()
        if exact and any(ch in text for ch in ".eE"):
            raise DistError(f"float literal {value!r} not allowed in exact mode")
        if not exact and any(ch in text for ch in ".eE"):
            return float(text)
        try:
            out = Fraction(text)
        except ValueError:
            raise DistError(f"cannot parse number {value!r}") from None
        return out if exact else float(out)
    if isinstance(value, (int, Fraction)):
        return Fraction(value) if exact else float(value)
    raise DistError(f"cannot parse number {value!r}")


def format_number(value) -> str | float:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, int):
        return str(value)
    return float(value)


@dataclass(frozen=True)
class Dist:
    """Probability vector on a finite space (exact rationals unless ``exact=False``)."""

    space: StateSpace
    mass: tuple
    exact: bool = True

    def __post_init__(self):
        mass = tuple(to_fraction(m, self.exact) for m in self.mass)
        if len(mass) != len(self.space):
            raise DistError(f"{len(mass)} masses for {len(self.space)} states")
        if any(m < 0 for m in mass):
            raise DistError("masses must be nonnegative")
        total = sum(mass)
        if self.exact and total != 1:
            raise DistError(f"masses sum to {total}, not 1")
        if not self.exact and abs(total - 1) > FLOAT_TOL:
            raise DistError(f"masses sum to {total}, not 1")
        object.__setattr__(self, "mass", mass)

    @classmethod
    def dirac(cls, space: StateSpace, i: int) -> "Dist":
        return cls(space, tuple(1 if k == i else 0 for k in range(len(space))))

    @classmethod
    def uniform(cls, space: StateSpace) -> "Dist":
        n = len(space)
        return cls(space, (Fraction(1, n),) * n)

    @classmethod
    def from_dict(cls, space: StateSpace, weights: dict) -> "Dist":
        return cls(space, tuple(weights.get(k, 0) for k in range(len(space))))

    def prob(self, B: Iterable[int]):
        return sum((self.mass[b] for b in B), 0 * self.mass[0])

    def support(self) -> list[int]:
        return [k for k, m in enumerate(self.mass) if m > 0]

    def expect(self, values: Sequence):
        return sum(m * v for m, v in zip(self.mass, values))

    def to_json(self) -> dict:
        return {"space": space_to_json(self.space), "mass": [format_number(m) for m in self.mass]}

    @classmethod
    def from_json(cls, doc: dict, space: StateSpace | None = None, exact: bool = True) -> "Dist":
        space = space_from_json(doc["space"]) if space is None else space
        return cls(space, tuple(doc["mass"]), exact)


@dataclass(frozen=True)
class CouplingMatrix:
    """Sparse joint distribution on ``left x right``."""

    left: StateSpace
    right: StateSpace
    entries: dict  # (i, j) -> mass, positive entries only
    in_relation: bool = False

    def row_sums(self) -> list:
        out = [0] * len(self.left)
        for (i, _), v in self.entries.items():
            out[i] += v
        return out

    def col_sums(self) -> list:
        out = [0] * len(self.right)
        for (_, j), v in self.entries.items():
            out[j] += v
        return out

    def support(self) -> list[tuple[int, int]]:
        return sorted(self.entries)

    def is_coupling_of(self, mu: Dist, nu: Dist, R: Relation | None = None) -> bool:
        """Exact marginal identities, nonnegativity, and (optionally) support in R."""
        if any(v < 0 for v in self.entries.values()):
            return False
        if list(self.row_sums()) != list(mu.mass) or list(self.col_sums()) != list(nu.mass):
            return False
        if R is not None and not all(R.bits[i, j] for i, j in self.entries):
            return False
        return True

    def to_json(self) -> list:
        return [[i, j, format_number(v)] for (i, j), v in sorted(self.entries.items())]


@dataclass(frozen=True)
class StDecision:
    """Outcome of a relatedness decision with exactly one witness."""

    related: bool
    coupling: CouplingMatrix | None = None
    violating: frozenset | None = None
    method: str = "flow"
    approximate: bool = False
    # values of mu(B) and nu(B->) for the violating set
    gap: tuple | None = field(default=None, compare=False)

    def to_json(self, R: Relation | None = None) -> dict:
        doc = {"related": self.related, "method": self.method, "approximate": self.approximate}
        if self.coupling is not None:
            doc["coupling"] = self.coupling.to_json()
        if self.violating is not None:
            doc["violating_set"] = sorted(self.violating)
            if R is not None:
                doc["violating_labels"] = [_label(R.left, i) for i in sorted(self.violating)]
            if self.gap is not None:
                doc["mu_B"], doc["nu_B_right"] = (format_number(g) for g in self.gap)
        return doc


def _label(space: StateSpace, i: int):
    lab = space.labels[i]
    return lab if isinstance(lab, int) else format_label(lab)


# ---------------------------------------------------------------------------
# local decision core: integer (or float) weights on small supports


def decide_local(lw: Sequence, rw: Sequence, allowed: Sequence[Sequence[int]], tol: float = 0):
    """Decide feasibility of a transportation problem with equal totals.

    Returns ``(related, flow, violating)`` where ``flow`` maps position pairs
    to flow (when related) and ``violating`` is a set of left positions with
    ``sum lw[B] > sum rw[B->]`` (when not).
    """
    total = sum(lw)
    res = transport_flow(lw, rw, allowed, tol)
    if res.value >= total - tol * max(1, len(lw)):
        return True, res.flow, None
    return False, None, res.cut_left


def oracle_local(lw: Sequence, rw: Sequence, allowed: Sequence[Sequence[int]], tol: float = 0):
    """Same contract as :func:`decide_local`, by enumerating left subsets."""
    pos = [a for a in range(len(lw)) if lw[a] > 0]
    masks = [0] * len(lw)
    for a in range(len(lw)):
        for b in allowed[a]:
            masks[a] |= 1 << b
    for size in range(1, len(pos) + 1):
        for combo in combinations(pos, size):
            cmask = 0
            for a in combo:
                cmask |= masks[a]
            left = sum(lw[a] for a in combo)
            right = sum(rw[b] for b in range(len(rw)) if cmask >> b & 1)
            if left > right + tol:
                return False, None, frozenset(combo)
    return True, None, None


def _scaled(mu: Dist, nu: Dist, li: Sequence[int], rj: Sequence[int]):
    if not mu.exact or not nu.exact:
        return [float(mu.mass[i]) for i in li], [float(nu.mass[j]) for j in rj], 1.0
    den = 1
    for v in (*(mu.mass[i] for i in li), *(nu.mass[j] for j in rj)):
        den = den * v.denominator // math.gcd(den, v.denominator)
    lw = [int(mu.mass[i] * den) for i in li]
    rw = [int(nu.mass[j] * den) for j in rj]
    return lw, rw, den


def _check_inputs(R: Relation, mu: Dist, nu: Dist) -> None:
    if mu.space != R.left or nu.space != R.right:
        raise RelationError("distribution spaces do not match the relation")
    for d in (mu, nu):
        total = sum(d.mass)
        if (d.exact and total != 1) or (not d.exact and abs(total - 1) > FLOAT_TOL):
            raise DistError("marginal not normalized")


def st_related(R: Relation, mu: Dist, nu: Dist, method: str = "flow", tol: float = FLOAT_TOL) -> StDecision:
    """Decide ``mu ~st nu`` under R.

    ``method='flow'`` (default) returns a coupling supported in R or a
    violating set from the minimum cut; ``method='subset'`` enumerates
    subsets and returns only the violating set.  Float distributions are
    decided with tolerance ``tol`` and flagged approximate.
    """
    _check_inputs(R, mu, nu)
    approx = not (mu.exact and nu.exact)
    eps = tol if approx else 0
    li, rj = mu.support(), nu.support()
    rpos = {j: b for b, j in enumerate(rj)}
    allowed = [[rpos[j] for j in R.partners(i).tolist() if j in rpos] for i in li]
    lw, rw, den = _scaled(mu, nu, li, rj)
    local = decide_local if method == "flow" else oracle_local
    if method not in ("flow", "subset"):
        raise ValueError(f"unknown method {method!r}")
    related, flow, cut = local(lw, rw, allowed, eps)
    if related:
        coupling = None
        if flow is not None:
            if approx:
                entries = {(li[a], rj[b]): f for (a, b), f in flow.items()}
            else:
                entries = {(li[a], rj[b]): Fraction(f, den) for (a, b), f in flow.items()}
            coupling = CouplingMatrix(R.left, R.right, entries, in_relation=True)
        return StDecision(True, coupling=coupling, method=method, approximate=approx)
    B = frozenset(li[a] for a in cut)
    gap = (mu.prob(B), nu.prob(conjugate_set(R, B, "right")))
    if not approx and not gap[0] > gap[1]:
        raise AssertionError("min cut produced a non-violating set")
    return StDecision(False, violating=B, method=method, approximate=approx, gap=gap)


def subset_violation(R: Relation, mu: Dist, nu: Dist) -> frozenset | None:
    """First B (by subset bitmask order) with ``mu(B) > nu(B->)``, or None.

    Enumerates all ``2**n1`` subsets of the left space.
    """
    _check_inputs(R, mu, nu)
    n1 = len(R.left)
    if n1 > ORACLE_MAX_STATES:
        raise RelationError(f"subset oracle limited to {ORACLE_MAX_STATES} left states, got {n1}")
    rows = [sum(1 << j for j in R.partners(i).tolist()) for i in range(n1)]
    nu_mass = nu.mass
    n2 = len(nu_mass)
    # byte-wise lookup tables for nu of a right bitmask
    tables = []
    for chunk in range(0, n2, 8):
        width = min(8, n2 - chunk)
        table = [0 * nu_mass[0]] * (1 << width)
        for m in range(1, 1 << width):
            low = (m & -m).bit_length() - 1
            table[m] = table[m & (m - 1)] + nu_mass[chunk + low]
        tables.append(table)

    def nu_of(mask):
        total = 0 * nu_mass[0]
        k = 0
        while mask:
            total += tables[k][mask & 0xFF]
            mask >>= 8
            k += 1
        return total

    size = 1 << n1
    conj = [0] * size
    mass = [0 * mu.mass[0]] * size
    for m in range(1, size):
        low = (m & -m).bit_length() - 1
        prev = m & (m - 1)
        conj[m] = conj[prev] | rows[low]
        mass[m] = mass[prev] + mu.mass[low]
        if mass[m] > nu_of(conj[m]):
            return frozenset(k for k in range(n1) if m >> k & 1)
    return None


def subset_oracle(R: Relation, mu: Dist, nu: Dist) -> bool:
    """``mu(B) <= nu(B->)`` for every subset B of the left space."""
    return subset_violation(R, mu, nu) is None


def functional_test(R: Relation, mu: Dist, nu: Dist, f: RealFn) -> bool:
    """Single necessary condition ``E_mu f <= E_nu f->``."""
    if f.space != R.left:
        raise RelationError("test function must live on the left space")
    g = conjugate_fn(R, f, "right")
    return mu.expect(f.values) <= nu.expect(g.values)


def upper_set_test(R: Relation, mu: Dist, nu: Dist) -> bool:
    """Classical order test: ``mu(B) <= nu(B)`` for every R-upper set B.

    R must be an order (reflexive, transitive) on one space.
    """
    if R.left != R.right:
        raise RelationError("upper sets need a relation on a single space")
    n = len(R.left)
    if n > ORACLE_MAX_STATES:
        raise RelationError("space too large for upper-set enumeration")
    up = [frozenset(R.partners(i).tolist()) for i in range(n)]
    for m in range(1, 1 << n):
        B = {k for k in range(n) if m >> k & 1}
        if all(up[k] <= B for k in B) and mu.prob(B) > nu.prob(B):
            return False
    return True
