import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochrel.coupling import st_related
from stochrel.ctmc import compare_stationary
from stochrel.population import ModelError, to_rate_kernel
from stochrel.queueing import (
    alpha_eval,
    alpha_properties,
    alpha_relation,
    queueing_formula,
    queueing_models,
    reproduce_queueing,
)
from stochrel.queueing import _alpha_items
from stochrel.relcore import StateSpace, build_relation, is_subset

GRID = StateSpace.grid([[0, 8], [0, 8]])


def brute_formula(n, x, y):
    return sum(x) <= sum(y) and max(x) <= max(y) + max(min(y) - n, 0)


def test_alpha_example():
    assert alpha_eval(0, (2, 1)) == 3
    assert alpha_eval(5, (2, 1)) == 2


@pytest.mark.parametrize("n", range(7))
def test_formula_matches_pointwise_definition(n):
    R = queueing_formula(n, GRID)
    for (i, x) in enumerate(GRID.labels):
        for (j, y) in enumerate(GRID.labels):
            assert ((i, j) in R) == brute_formula(n, x, y)


@pytest.mark.parametrize("n", range(7))
def test_formula_equals_alpha_form(n):
    assert queueing_formula(n, GRID) == alpha_relation(n, GRID)


def test_formula_at_zero_is_total_order():
    assert queueing_formula(0, GRID) == build_relation("sum_leq", GRID)


def test_formula_for_large_n_is_weak_majorization():
    assert queueing_formula(9, GRID) == build_relation("weak_majorization", GRID)


def test_formula_is_antitone_in_n():
    for n in range(8):
        assert is_subset(queueing_formula(n + 1, GRID), queueing_formula(n, GRID))


def test_alpha_properties_on_default_grid():
    rep = alpha_properties()
    assert rep.holds
    assert rep.checked == 21 * 21 * 6


@given(st.integers(0, 30), st.integers(-40, 40), st.integers(-40, 40))
def test_alpha_properties_hold_everywhere(n, x1, x2):
    assert all(_alpha_items(n, (x1, x2)).values())


def test_alpha_report_json():
    doc = alpha_properties((0, 3), 1).to_json()
    assert doc["holds"] and doc["points_checked"] == 32
    assert set(doc["violations"]) == {"i", "ii", "iii", "iv", "v", "vi"}


@pytest.mark.parametrize("lams", [("2/5", "3/10"), ("1/2", "1/2")])
def test_small_reproduction_matches_closed_form(lams):
    rep = reproduce_queueing(*lams, N=12, n_max=5)
    assert rep.all_match
    assert [r["n"] for r in rep.rows] == list(range(6))
    assert rep.rows[0]["outside_mismatches"] == 0


def test_worklist_and_full_rescan_reports_agree():
    a = reproduce_queueing("2/5", "3/10", N=10, n_max=4, worklist=True)
    b = reproduce_queueing("2/5", "3/10", N=10, n_max=4, worklist=False)
    assert a.to_json() == b.to_json()


def test_reproduction_needs_room_for_the_iterations():
    with pytest.raises(ModelError):
        reproduce_queueing("2/5", "3/10", N=8, n_max=5)


@pytest.mark.parametrize("lam", ["0", "1", "3/2"])
def test_arrival_rates_must_lie_in_open_unit_interval(lam):
    with pytest.raises(ModelError):
        queueing_models(lam, "1/2", 6)


def test_shared_buffer_recovers_weak_majorization():
    lb, indep = queueing_models("2/5", "3/10", 8, truncation="total")
    R = build_relation("sum_leq", lb.space)
    cmp = compare_stationary(R, to_rate_kernel(lb), to_rate_kernel(indep))
    assert cmp.trace.fixed_point == build_relation("weak_majorization", lb.space)
    assert cmp.status == "related" and cmp.related


def test_per_queue_caps_break_the_comparison():
    # with per-queue caps the balanced system loses fewer arrivals near the
    # corner, so its stationary law is heavier in the far tail
    lb, indep = queueing_models("2/5", "3/10", 8, truncation="box")
    R = build_relation("sum_leq", lb.space)
    cmp = compare_stationary(R, to_rate_kernel(lb), to_rate_kernel(indep))
    assert cmp.status == "inconclusive"
    assert not cmp.related
    assert not st_related(build_relation("weak_majorization", lb.space), cmp.pi1, cmp.pi2).related
