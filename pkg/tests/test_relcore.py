import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochrel.relcore import (
    RealFn,
    Relation,
    RelationError,
    StateSpace,
    build_relation,
    conjugate_fn,
    conjugate_set,
    format_label,
    induced,
    intersect,
    is_subset,
    parse_label,
    relation_from_json,
    relation_to_json,
    restrict_to_box,
    space_from_json,
    weakly_majorized,
)


@st.composite
def relations(draw, max_n=6):
    n1 = draw(st.integers(1, max_n))
    n2 = draw(st.integers(1, max_n))
    flat = draw(st.lists(st.booleans(), min_size=n1 * n2, max_size=n1 * n2))
    bits = np.array(flat, dtype=bool).reshape(n1, n2)
    return Relation(StateSpace.range(n1), StateSpace.range(n2), bits)


def leq(n):
    S = StateSpace.range(n)
    return build_relation("from_predicate_table", S, S, table=[[i <= j for j in range(n)] for i in range(n)])


def subsets(n):
    for k in range(n + 1):
        yield from itertools.combinations(range(n), k)


def test_labels_round_trip():
    assert format_label((1, 2, 3)) == "(1,2,3)"
    assert parse_label("(1, 2,3)") == (1, 2, 3)
    assert parse_label("a") == "a"


def test_space_rejects_duplicates():
    with pytest.raises(RelationError):
        StateSpace(("a", "a"))


def test_grid_space_is_lexicographic():
    S = StateSpace.grid([[0, 1], [0, 2]])
    assert S.labels == ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2))
    assert S.index((1, 0)) == 3


def test_conjugate_equality_fixes_sets():
    S = StateSpace(("a", "b", "c"))
    R = build_relation("equality", S)
    assert conjugate_set(R, [1]) == {1}


def test_conjugate_order():
    assert conjugate_set(leq(3), [1]) == {1, 2}


def test_conjugate_of_empty_set():
    R = build_relation("full", StateSpace.range(3))
    assert conjugate_set(R, []) == frozenset()


def test_conjugate_index_out_of_range():
    with pytest.raises(RelationError):
        conjugate_set(leq(3), [3])


def test_left_conjugate_is_right_conjugate_of_transpose():
    R = leq(4)
    assert conjugate_set(R, [1], "left") == {0, 1}
    assert conjugate_set(R, [1], "left") == conjugate_set(R.transpose(), [1], "right")


def test_conjugate_fn_equality_is_identity():
    S = StateSpace.range(4)
    f = RealFn(S, (3, 0, Fraction(1, 2), 7))
    assert conjugate_fn(build_relation("equality", S), f).values == f.values


def test_conjugate_fn_empty_fiber_is_zero():
    S = StateSpace.range(3)
    R = build_relation("from_pairs", S, S, pairs=[[0, 0], [1, 0]])
    g = conjugate_fn(R, RealFn(S, (2, 5, 9)))
    assert g.values == (5, 0, 0)


def test_realfn_rejects_negative_values():
    with pytest.raises(RelationError):
        RealFn(StateSpace.range(2), (1, -1))


def test_equality_has_n_bits():
    assert len(build_relation("equality", StateSpace.range(7))) == 7


def test_weak_majorization_example():
    S = StateSpace.grid([[0, 2], [0, 2]])
    R = build_relation("weak_majorization", S)
    assert (S.index((2, 0)), S.index((1, 2))) in R
    assert (S.index((2, 2)), S.index((2, 1))) not in R


def test_weak_majorization_matches_planar_form():
    S = StateSpace.grid([[0, 4], [0, 4]])
    R = build_relation("weak_majorization", S)
    for (i, x), (j, y) in itertools.product(enumerate(S.labels), repeat=2):
        planar = sum(x) <= sum(y) and max(x) <= max(y)
        assert ((i, j) in R) == planar == weakly_majorized(x, y)


def test_epsilon_distance():
    S = StateSpace.range(4)
    R = build_relation("epsilon_distance", S, eps=1)
    assert (0, 2) not in R
    assert (0, 1) in R


def test_epsilon_must_be_nonnegative():
    with pytest.raises(RelationError):
        build_relation("epsilon_distance", StateSpace.range(3), eps=-1)


def test_coordinatewise_needs_shared_coordinates():
    S = StateSpace.grid([[0, 1], [0, 1]])
    with pytest.raises(RelationError):
        build_relation("coordinatewise_leq", S, coords=[3])
    R = build_relation("coordinatewise_leq", S, coords=[2])
    assert (S.index((1, 0)), S.index((0, 1))) in R
    assert (S.index((0, 1)), S.index((1, 0))) not in R


def test_sum_leq():
    S = StateSpace.grid([[0, 2], [0, 2]])
    R = build_relation("sum_leq", S)
    assert (S.index((2, 0)), S.index((0, 2))) in R
    assert (S.index((2, 1)), S.index((0, 2))) not in R


def test_from_pairs_with_labels():
    S = StateSpace.grid([[0, 1], [0, 1]])
    R = build_relation("from_pairs", S, S, pairs=[["(0,0)", "(1,1)"], [1, 2]])
    assert R.label_pairs() == [((0, 0), (1, 1)), ((0, 1), (1, 0))]


def test_unknown_kind():
    with pytest.raises(RelationError):
        build_relation("nope", StateSpace.range(2))


def test_induced_identity_and_constant():
    S = StateSpace.range(3)
    R = leq(3)
    assert induced(R, [0, 1, 2], [0, 1, 2], S, S) == R
    T = StateSpace.range(4)
    full = induced(R, lambda k: 0, lambda k: 2, T, T)
    assert len(full) == 16


def test_induced_lumping_blocks():
    S4, S3 = StateSpace.range(4), StateSpace.range(3)
    f = [0, 1, 1, 2]
    R = induced(build_relation("equality", S3), f, f, S4, S4)
    expected = np.array([[f[a] == f[b] for b in range(4)] for a in range(4)])
    assert np.array_equal(R.bits, expected)


@given(relations(), st.data())
def test_induced_matches_double_loop(R, data):
    m1 = data.draw(st.integers(1, 5))
    m2 = data.draw(st.integers(1, 5))
    phi1 = data.draw(st.lists(st.integers(0, len(R.left) - 1), min_size=m1, max_size=m1))
    phi2 = data.draw(st.lists(st.integers(0, len(R.right) - 1), min_size=m2, max_size=m2))
    Rp = induced(R, phi1, phi2, StateSpace.range(m1), StateSpace.range(m2))
    for a in range(m1):
        for b in range(m2):
            assert Rp.bits[a, b] == R.bits[phi1[a], phi2[b]]


def test_induced_rejects_out_of_range_map():
    with pytest.raises(RelationError):
        induced(leq(2), [0, 5], [0, 1], StateSpace.range(2), StateSpace.range(2))


def test_intersect_subset_and_mismatch():
    R, S = leq(3), build_relation("equality", StateSpace.range(3))
    assert intersect(R, S) == S
    assert is_subset(S, R) and not is_subset(R, S)
    with pytest.raises(RelationError):
        intersect(R, leq(4))


def test_restrict_to_box():
    S = StateSpace.grid([[0, 3], [0, 3]])
    R = build_relation("sum_leq", S)
    small = restrict_to_box(R, [[0, 1], [0, 1]])
    assert small == build_relation("sum_leq", StateSpace.grid([[0, 1], [0, 1]]))


@given(relations())
def test_conjugate_monotone(R):
    n = len(R.left)
    for B in subsets(n):
        for extra in range(n):
            assert conjugate_set(R, B) <= conjugate_set(R, set(B) | {extra})


@given(relations())
def test_indicator_conjugate_is_conjugate_indicator(R):
    n = len(R.left)
    for B in subsets(n):
        lhs = conjugate_fn(R, RealFn.indicator(R.left, B)).values
        rhs = RealFn.indicator(R.right, conjugate_set(R, B)).values
        assert lhs == rhs


@given(relations(), st.data())
def test_level_sets_commute_with_conjugation(R, data):
    vals = data.draw(st.lists(st.fractions(min_value=0, max_value=5, max_denominator=4), min_size=len(R.left), max_size=len(R.left)))
    f = RealFn(R.left, tuple(vals))
    g = conjugate_fn(R, f)
    for r in sorted(set(f.values) | {Fraction(1, 3)}):
        assert conjugate_set(R, f.level_set(r)) == g.level_set(r)


def test_level_set_identity_needs_nonnegative_threshold():
    # an empty fiber has conjugate value 0, which exceeds any negative r
    S = StateSpace.range(2)
    R = build_relation("from_pairs", S, S, pairs=[[0, 0]])
    f = RealFn(S, (1, 1))
    assert conjugate_set(R, f.level_set(-1)) == {0}
    assert conjugate_fn(R, f).level_set(-1) == {0, 1}


@given(st.integers(1, 6), st.data())
def test_orders_are_closed_under_conjugation(n, data):
    # preorder generated by random pairs via transitive closure
    S = StateSpace.range(n)
    extra = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=6))
    M = np.eye(n, dtype=bool)
    for a, b in extra:
        M[a, b] = True
    for k in range(n):
        M |= M[:, [k]] & M[[k], :]
    R = Relation(S, S, M)
    for B in subsets(n):
        up = conjugate_set(R, B)
        assert set(B) <= up
        assert conjugate_set(R, up) == up


def test_relation_json_round_trip():
    S = StateSpace.grid([[0, 1], [0, 1]])
    R = build_relation("sum_leq", S)
    assert relation_from_json(relation_to_json(R)) == R
    doc = {"left": {"grid": [[0, 1], [0, 1]]}, "kind": "sum_leq"}
    assert relation_from_json(doc) == R


def test_space_from_json_forms():
    assert space_from_json({"range": 3}).labels == (0, 1, 2)
    assert space_from_json(["a", "(1,2)"]).labels == ("a", (1, 2))
    with pytest.raises(RelationError):
        space_from_json({"bogus": 1})


def test_relation_is_read_only():
    R = leq(2)
    with pytest.raises(ValueError):
        R.bits[0, 1] = False
