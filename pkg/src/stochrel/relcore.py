"""Finite state spaces, binary relations and relational conjugates.

A :class:`Relation` between two finite spaces is a dense boolean matrix
(rows indexed by the left space, columns by the right space).  Conjugates
follow the usual image conventions::

    B->  = { y : x ~ y for some x in B }
    f->(y) = max { f(x) : x ~ y }      (0 when y has no partner)
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "StateSpace",
    "Relation",
    "RealFn",
    "RelationError",
    "format_label",
    "parse_label",
    "conjugate_set",
    "conjugate_fn",
    "build_relation",
    "intersect",
    "is_subset",
    "restrict_to_box",
    "induced",
    "relation_from_json",
    "relation_to_json",
    "space_from_json",
    "space_to_json",
]


class RelationError(ValueError):
    """Raised for malformed relations, mismatched spaces or bad parameters."""


_VECTOR_LABEL = re.compile(r"^\(\s*-?\d+\s*(,\s*-?\d+\s*)*\)$")


def format_label(label) -> str:
    """Canonical text form of a label; integer vectors become ``"(k1,...,km)"``."""
    if isinstance(label, tuple):
        return "(" + ",".join(str(int(k)) for k in label) + ")"
    return str(label)


def parse_label(raw):
    """Inverse of :func:`format_label` for JSON input (lists also accepted)."""
    if isinstance(raw, list):
        return tuple(int(k) for k in raw)
    if isinstance(raw, str) and _VECTOR_LABEL.match(raw):
        return tuple(int(k) for k in raw.strip("() ").split(","))
    if isinstance(raw, (int, str)):
        return raw
    raise RelationError(f"unsupported state label {raw!r}")


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Ordered list of distinct state labels."""

    labels: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise RelationError("state space must be nonempty")
        index = {lab: k for k, lab in enumerate(labels)}
        if len(index) != len(labels):
            raise RelationError("state labels must be distinct")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", index)

    @classmethod
    def grid(cls, box: Sequence[Sequence[int]]) -> "StateSpace":
        """All integer vectors in ``box`` (list of ``[lo, hi]``), lexicographic order."""
        ranges = [range(int(lo), int(hi) + 1) for lo, hi in box]
        if any(len(r) == 0 for r in ranges):
            raise RelationError(f"empty box {box!r}")
        return cls(tuple(itertools.product(*ranges)))

    @classmethod
    def range(cls, n: int) -> "StateSpace":
        return cls(tuple(range(n)))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, StateSpace) and self.labels == other.labels

    def __hash__(self) -> int:
        return hash(self.labels)

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise RelationError(f"unknown state {label!r}") from None

    def get(self, label, default=None):
        return self._index.get(label, default)

    def __contains__(self, label) -> bool:
        return label in self._index

    @property
    def dim(self) -> int | None:
        """Vector length when all labels are integer tuples of one length."""
        first = self.labels[0]
        if not isinstance(first, tuple):
            return None
        m = len(first)
        if all(isinstance(lab, tuple) and len(lab) == m for lab in self.labels):
            return m
        return None


@dataclass(frozen=True, eq=False)
class Relation:
    """Subset of ``left x right`` stored as an ``n1 x n2`` boolean matrix."""

    left: StateSpace
    right: StateSpace
    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.shape != (len(self.left), len(self.right)):
            raise RelationError(
                f"bit matrix shape {bits.shape} does not match spaces "
                f"({len(self.left)}, {len(self.right)})"
            )
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, left: StateSpace, right: StateSpace) -> "Relation":
        return cls(left, right, np.zeros((len(left), len(right)), dtype=bool))

    def __contains__(self, pair) -> bool:
        i, j = pair
        return bool(self.bits[i, j])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Relation)
            and self.left == other.left
            and self.right == other.right
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self) -> int:
        return hash((self.left, self.right, self.bits.tobytes()))

    def __len__(self) -> int:
        return int(self.bits.sum())

    @property
    def nontrivial(self) -> bool:
        return bool(self.bits.any())

    def pairs(self) -> list[tuple[int, int]]:
        """Related index pairs in lexicographic order."""
        ii, jj = np.nonzero(self.bits)
        return list(zip(ii.tolist(), jj.tolist()))

    def label_pairs(self) -> list[tuple]:
        return [(self.left.labels[i], self.right.labels[j]) for i, j in self.pairs()]

    def partners(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.bits[i])

    def with_bits(self, bits: np.ndarray) -> "Relation":
        return Relation(self.left, self.right, bits)

    def transpose(self) -> "Relation":
        return Relation(self.right, self.left, self.bits.T)


@dataclass(frozen=True)
class RealFn:
    """Nonnegative rational function on a finite space."""

    space: StateSpace
    values: tuple

    def __post_init__(self):
        vals = tuple(Fraction(v) for v in self.values)
        if len(vals) != len(self.space):
            raise RelationError("function length does not match its space")
        if any(v < 0 for v in vals):
            raise RelationError("conjugates are defined for nonnegative functions")
        object.__setattr__(self, "values", vals)

    @classmethod
    def indicator(cls, space: StateSpace, subset: Iterable[int]) -> "RealFn":
        members = set(subset)
        return cls(space, tuple(1 if k in members else 0 for k in range(len(space))))

    def level_set(self, r) -> frozenset:
        """``{x : f(x) > r}`` as an index set."""
        return frozenset(k for k, v in enumerate(self.values) if v > r)


def _check_side(side: str) -> None:
    if side not in ("left", "right"):
        raise RelationError(f"side must be 'left' or 'right', got {side!r}")


def conjugate_set(R: Relation, B: Iterable[int], side: str = "right") -> frozenset:
    """Right conjugate ``B->`` (``side='right'``, B in the left space) or left conjugate ``B<-``."""
    _check_side(side)
    idx = sorted(set(int(b) for b in B))
    if side == "right":
        n = len(R.left)
        bits = R.bits
    else:
        n = len(R.right)
        bits = R.bits.T
    for b in idx:
        if not 0 <= b < n:
            raise RelationError(f"state index {b} out of range 0..{n - 1}")
    if not idx:
        return frozenset()
    return frozenset(np.flatnonzero(bits[idx].any(axis=0)).tolist())


def conjugate_fn(R: Relation, f: RealFn, side: str = "right") -> RealFn:
    """``f->(y) = max_{x ~ y} f(x)`` (or the mirrored left conjugate), 0 on empty fibers."""
    _check_side(side)
    if side == "right":
        if f.space != R.left:
            raise RelationError("function space does not match the relation's left space")
        bits, target = R.bits, R.right
    else:
        if f.space != R.right:
            raise RelationError("function space does not match the relation's right space")
        bits, target = R.bits.T, R.left
    out = []
    for col in range(bits.shape[1]):
        rows = np.flatnonzero(bits[:, col])
        out.append(max((f.values[r] for r in rows), default=Fraction(0)))
    return RealFn(target, tuple(out))


# ---------------------------------------------------------------------------
# builders


def _scalar(label):
    if isinstance(label, tuple):
        if len(label) != 1:
            raise RelationError(f"expected scalar state, got vector {label!r}")
        return label[0]
    if isinstance(label, str):
        raise RelationError(f"expected numeric state, got {label!r}")
    return label


def _vector(label) -> tuple:
    if isinstance(label, tuple):
        return label
    if isinstance(label, int):
        return (label,)
    raise RelationError(f"expected integer vector state, got {label!r}")


def weakly_majorized(x: Sequence[int], y: Sequence[int]) -> bool:
    """Partial sums of decreasingly sorted ``x`` never exceed those of ``y``."""
    xs = sorted(x, reverse=True)
    ys = sorted(y, reverse=True)
    sx = sy = 0
    for a, b in zip(xs, ys):
        sx += a
        sy += b
        if sx > sy:
            return False
    return True


def _from_predicate(left: StateSpace, right: StateSpace, pred: Callable) -> np.ndarray:
    bits = np.zeros((len(left), len(right)), dtype=bool)
    for i, x in enumerate(left.labels):
        for j, y in enumerate(right.labels):
            if pred(x, y):
                bits[i, j] = True
    return bits


def _grid_arrays(space: StateSpace) -> np.ndarray:
    return np.array([_vector(lab) for lab in space.labels], dtype=np.int64)


_KIND_PARAMS = {
    "equality": ((), ()),
    "full": ((), ()),
    "epsilon_distance": (("eps",), ()),
    "coordinatewise_leq": ((), ("coords",)),
    "sum_leq": ((), ()),
    "weak_majorization": ((), ()),
    "from_pairs": (("pairs",), ()),
    "from_predicate_table": (("table",), ()),
}


def build_relation(kind: str, left: StateSpace, right: StateSpace | None = None, **params) -> Relation:
    """Materialize one of the named relations.

    Supported kinds: ``equality``, ``full``, ``epsilon_distance`` (``eps``),
    ``coordinatewise_leq`` (``coords``, 1-based, default all), ``sum_leq``,
    ``weak_majorization``, ``from_pairs`` (``pairs`` as index or label pairs),
    ``from_predicate_table`` (``table``, an ``n1 x n2`` 0/1 matrix).
    """
    right = left if right is None else right
    if kind not in _KIND_PARAMS:
        raise RelationError(f"unknown relation kind {kind!r}")
    required, optional = _KIND_PARAMS[kind]
    missing = [k for k in required if k not in params]
    unknown = sorted(set(params) - set(required) - set(optional))
    if missing or unknown:
        raise RelationError(f"relation kind {kind!r}: missing {missing}, unexpected {unknown}")
    if kind == "equality":
        bits = np.zeros((len(left), len(right)), dtype=bool)
        for i, lab in enumerate(left.labels):
            j = right.get(lab)
            if j is not None:
                bits[i, j] = True
    elif kind == "full":
        bits = np.ones((len(left), len(right)), dtype=bool)
    elif kind == "epsilon_distance":
        eps = Fraction(params["eps"])
        if eps < 0:
            raise RelationError("epsilon must be nonnegative")
        bits = _from_predicate(left, right, lambda x, y: abs(_scalar(x) - _scalar(y)) <= eps)
    elif kind == "coordinatewise_leq":
        m1, m2 = left.dim, right.dim
        if m1 is None or m2 is None:
            raise RelationError("coordinatewise order needs integer-vector states")
        coords = params.get("coords")
        coords = list(range(1, min(m1, m2) + 1)) if coords is None else [int(c) for c in coords]
        if any(not 1 <= c <= min(m1, m2) for c in coords):
            raise RelationError(f"coordinates {coords} are not shared by both spaces")
        X, Y = _grid_arrays(left), _grid_arrays(right)
        bits = np.ones((len(left), len(right)), dtype=bool)
        for c in coords:
            bits &= X[:, c - 1][:, None] <= Y[:, c - 1][None, :]
    elif kind == "sum_leq":
        X, Y = _grid_arrays(left), _grid_arrays(right)
        bits = X.sum(axis=1)[:, None] <= Y.sum(axis=1)[None, :]
    elif kind == "weak_majorization":
        m1, m2 = left.dim, right.dim
        if m1 is None or m1 != m2:
            raise RelationError("weak majorization needs integer vectors of one length")
        X = -np.sort(-_grid_arrays(left), axis=1).cumsum(axis=1)
        Y = -np.sort(-_grid_arrays(right), axis=1).cumsum(axis=1)
        bits = np.ones((len(left), len(right)), dtype=bool)
        for c in range(m1):
            bits &= X[:, c][:, None] <= Y[:, c][None, :]
    elif kind == "from_pairs":
        bits = np.zeros((len(left), len(right)), dtype=bool)
        for a, b in params["pairs"]:
            i = a if isinstance(a, int) and not isinstance(a, bool) else left.index(parse_label(a))
            j = b if isinstance(b, int) and not isinstance(b, bool) else right.index(parse_label(b))
            if not (0 <= i < len(left) and 0 <= j < len(right)):
                raise RelationError(f"pair ({a}, {b}) out of range")
            bits[i, j] = True
    elif kind == "from_predicate_table":
        bits = np.array(params["table"], dtype=bool)
    return Relation(left, right, bits)


# ---------------------------------------------------------------------------
# relation algebra


def _same_spaces(R: Relation, S: Relation) -> None:
    if R.left != S.left or R.right != S.right:
        raise RelationError("relations live on different spaces")


def intersect(R: Relation, S: Relation) -> Relation:
    _same_spaces(R, S)
    return R.with_bits(R.bits & S.bits)


def is_subset(R: Relation, S: Relation) -> bool:
    _same_spaces(R, S)
    return not bool((R.bits & ~S.bits).any())


def restrict_to_box(R: Relation, box_left, box_right=None) -> Relation:
    """Restriction of a grid relation to the states lying inside the given boxes."""
    box_right = box_left if box_right is None else box_right

    def keep(space, box):
        return [
            k for k, lab in enumerate(space.labels)
            if all(lo <= c <= hi for c, (lo, hi) in zip(_vector(lab), box))
        ]

    li, rj = keep(R.left, box_left), keep(R.right, box_right)
    if not li or not rj:
        raise RelationError("box excludes every state")
    left = StateSpace(tuple(R.left.labels[i] for i in li))
    right = StateSpace(tuple(R.right.labels[j] for j in rj))
    return Relation(left, right, R.bits[np.ix_(li, rj)])


def induced(R: Relation, phi1, phi2, left: StateSpace, right: StateSpace) -> Relation:
    """Pullback ``{(x', y') : (phi1(x'), phi2(y')) in R}``.

    ``phi1``/``phi2`` map indices of ``left``/``right`` to indices of
    ``R.left``/``R.right``; sequences or callables are accepted.
    """
    m1 = [phi1(k) if callable(phi1) else phi1[k] for k in range(len(left))]
    m2 = [phi2(k) if callable(phi2) else phi2[k] for k in range(len(right))]
    for v, n in itertools.chain(((v, len(R.left)) for v in m1), ((v, len(R.right)) for v in m2)):
        if not 0 <= v < n:
            raise RelationError(f"map value {v} outside the target space")
    return Relation(left, right, R.bits[np.ix_(m1, m2)])


# ---------------------------------------------------------------------------
# JSON


def space_to_json(space: StateSpace) -> list:
    return [lab if isinstance(lab, int) else format_label(lab) for lab in space.labels]


def space_from_json(raw) -> StateSpace:
    if isinstance(raw, dict):
        if "grid" in raw:
            return StateSpace.grid(raw["grid"])
        if "range" in raw:
            return StateSpace.range(int(raw["range"]))
        raise RelationError(f"unknown space description {raw!r}")
    if not isinstance(raw, list):
        raise RelationError("state space must be a list of labels")
    return StateSpace(tuple(parse_label(lab) for lab in raw))


def relation_from_json(doc: dict, left: StateSpace | None = None, right: StateSpace | None = None) -> Relation:
    """Build a relation from ``{"left", "right", "kind", "params"}`` or ``{"left", "right", "pairs"}``."""
    extra = sorted(set(doc) - {"left", "right", "kind", "params", "pairs"})
    if extra:
        raise RelationError(f"unexpected relation keys {extra}; parameters go under 'params'")
    if left is None:
        left = space_from_json(doc["left"])
    if right is None:
        right = space_from_json(doc["right"]) if "right" in doc else left
    if "pairs" in doc:
        return build_relation("from_pairs", left, right, pairs=doc["pairs"])
    kind = doc.get("kind")
    if kind is None:
        raise RelationError("relation needs 'kind' or 'pairs'")
    return build_relation(kind, left, right, **doc.get("params", {}))


def relation_to_json(R: Relation) -> dict:
    return {
        "left": space_to_json(R.left),
        "right": space_to_json(R.right),
        "pairs": [[i, j] for i, j in R.pairs()],
    }
