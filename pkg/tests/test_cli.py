import json
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import pytest

from stochrel.cli import main

DATA = Path(__file__).parent / "data"


@pytest.fixture
def run(capsys):
    def _run(*argv):
        code = main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    return _run


@pytest.fixture
def write(tmp_path):
    def _write(name, doc):
        path = tmp_path / name
        path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return path

    return _write


@pytest.fixture
def order3(write):
    # 0 <= 1 <= 2 and two monotone kernels
    rel = write("rel.json", {"left": {"range": 3}, "kind": "from_predicate_table",
                             "params": {"table": [[1, 1, 1], [0, 1, 1], [0, 0, 1]]}})
    P1 = write("p1.json", {"from": {"range": 3}, "to": {"range": 3},
                           "rows": [["1/2", "1/2", 0], [0, "1/2", "1/2"], [0, 0, 1]]})
    P2 = write("p2.json", {"from": {"range": 3}, "to": {"range": 3},
                           "rows": [[0, "1/2", "1/2"], [0, 0, 1], [0, 0, 1]]})
    return rel, P1, P2


def test_relate_equal_laws_gives_diagonal_witness(run, write):
    rel = write("rel.json", {"left": {"range": 3}, "kind": "equality"})
    mu = write("mu.json", {"mass": ["1/2", "1/3", "1/6"]})
    code, out, _ = run("relate", rel, mu, mu)
    doc = json.loads(out)
    assert code == 0 and doc["related"]
    assert doc["coupling"] == [[0, 0, "1/2"], [1, 1, "1/3"], [2, 2, "1/6"]]


def test_relate_disjoint_supports_reports_support(run, write):
    rel = write("rel.json", {"left": {"range": 4}, "kind": "equality"})
    mu = write("mu.json", {"mass": ["1/2", "1/2", 0, 0]})
    nu = write("nu.json", [0, 0, "1/2", "1/2"])
    code, out, _ = run("relate", rel, mu, nu)
    doc = json.loads(out)
    assert code == 1 and not doc["related"]
    assert doc["violating_set"] == [0, 1]


@pytest.mark.parametrize("case", ["related", "unrelated"])
def test_relate_matches_golden_report(run, case):
    code, out, _ = run("relate", DATA / "eps_relation.json", DATA / "eps_mu.json", DATA / f"eps_nu_{case}.json")
    assert out == (DATA / f"eps_report_{case}.json").read_text()
    assert code == (0 if case == "related" else 1)


@pytest.mark.parametrize("case", ["related", "unrelated"])
def test_oracle_flag_agrees_with_golden_decision(run, case):
    _, out, _ = run("relate", "--oracle", DATA / "eps_relation.json", DATA / "eps_mu.json", DATA / f"eps_nu_{case}.json")
    golden = json.loads((DATA / f"eps_report_{case}.json").read_text())
    doc = json.loads(out)
    assert doc["method"] == "subset" and doc["related"] == golden["related"]


def test_reports_are_deterministic(run, tmp_path):
    args = ["relate", DATA / "eps_relation.json", DATA / "eps_mu.json", DATA / "eps_nu_related.json"]
    first = run(*args)[1]
    assert run(*args)[1] == first
    out = tmp_path / "report.json"
    assert run(*args, "-o", out)[1] == ""
    assert out.read_text() == first


def test_float_literal_rejected_in_exact_mode(run, write):
    rel = write("rel.json", {"left": {"range": 2}, "kind": "full"})
    mu = write("mu.json", {"mass": [0.5, 0.5]})
    code, _, err = run("relate", rel, mu, mu)
    assert code == 2 and "float literal" in err
    code, out, _ = run("relate", "--mode", "float", rel, mu, mu)
    doc = json.loads(out)
    assert code == 0 and doc["approximate"]


def test_tolerance_only_in_float_mode(run):
    args = ["relate", DATA / "eps_relation.json", DATA / "eps_mu.json", DATA / "eps_mu.json"]
    assert run(*args, "--tol", "1e-9")[0] == 2
    assert run(*args, "--mode", "float", "--tol", "1e-9")[0] == 0
    assert run(*args, "--mode", "float", "--tol", "-1")[0] == 2


@pytest.mark.parametrize(
    "rel_doc,mu_doc",
    [
        ("{not json", {"mass": [1]}),
        ({"left": {"range": 2}, "kind": "nope"}, {"mass": [1, 0]}),
        ({"left": {"range": 2}, "kind": "epsilon_distance", "eps": 1}, {"mass": [1, 0]}),
        ({"left": {"range": 2}, "kind": "full"}, {"mass": [1, 0, 0]}),
        ({"left": {"range": 2}, "kind": "full"}, {"mass": ["1/2", "1/3"]}),
        ({"left": {"range": 2}, "kind": "full"}, {"space": {"range": 3}, "mass": [1, 0]}),
    ],
)
def test_input_errors_exit_two(run, write, rel_doc, mu_doc):
    rel, mu = write("rel.json", rel_doc), write("mu.json", mu_doc)
    code, out, err = run("relate", rel, mu, mu)
    assert code == 2 and out == "" and err.startswith("stochrel: error:")


def test_missing_file_and_bad_command_exit_two(run, tmp_path):
    assert run("relate", tmp_path / "a", tmp_path / "b", tmp_path / "c")[0] == 2
    assert run("frobnicate")[0] == 2
    assert run()[0] == 2


def test_thread_variable_is_validated(run, monkeypatch):
    args = ["alpha-props", "--lo", "0", "--hi", "2", "--n-max", "1"]
    monkeypatch.setenv("STOCHREL_THREADS", "4")
    assert run(*args)[0] == 0
    monkeypatch.setenv("STOCHREL_THREADS", "zero")
    assert run(*args)[0] == 2
    monkeypatch.setenv("STOCHREL_THREADS", "0")
    assert run(*args)[0] == 2


def test_conjugate_set_and_function(run, order3, write):
    rel = order3[0]
    code, out, _ = run("conjugate", rel, "--set", "[1]")
    assert code == 0 and json.loads(out)["conjugate"] == [1, 2]
    assert json.loads(run("conjugate", rel, "--set", "[1]", "--side", "left")[1])["conjugate"] == [0, 1]
    f = write("f.json", ["3", "1/2", "1"])
    assert json.loads(run("conjugate", rel, "--function", f)[1])["conjugate"] == ["3", "3", "3"]


def test_preserve_and_subrelation_on_preserving_fixture(run, order3):
    rel, P1, P2 = order3
    code, out, _ = run("preserve", rel, P1, P2)
    assert code == 0 and json.loads(out)["preserved"]
    code, out, _ = run("subrelation", rel, P1, P2)
    doc = json.loads(out)
    assert code == 0 and len(doc["sizes"]) == 1 and doc["converged"]
    assert run("subrelation", "--full-rescan", rel, P1, P2)[1] == out


def test_preserve_reports_failures(run, order3):
    rel, P1, P2 = order3
    code, out, _ = run("preserve", rel, P2, P1)
    doc = json.loads(out)
    assert code == 1 and doc["failures"]


def test_preserve_with_target_relation(run, order3, write):
    rel, P1, P2 = order3
    full = write("full.json", {"left": {"range": 3}, "kind": "full"})
    assert run("preserve", rel, P2, P1, "--target", full)[0] == 0


def test_ct_commands(run, write):
    rel = write("rel.json", {"left": {"range": 3}, "kind": "from_predicate_table",
                             "params": {"table": [[1, 1, 1], [0, 1, 1], [0, 0, 1]]}})
    slow = write("q1.json", {"space": {"range": 3}, "rates": [{"1": "1/3"}, {"0": 1, "2": "1/3"}, {"1": 1}]})
    fast = write("q2.json", {"space": {"range": 3}, "rates": [{"1": "1/2"}, {"0": 1, "2": "1/2"}, {"1": 1}]})
    assert run("ct-preserve", rel, slow, fast)[0] == 0
    assert run("ct-preserve", "--oracle", rel, fast, slow)[0] == 1
    code, out, _ = run("ct-subrelation", rel, fast, slow)
    assert code == 1 and json.loads(out)["fixed_point_pairs"] == []


def test_stationary_compare_from_files(run, write):
    rel = write("rel.json", {"left": {"range": 3}, "kind": "from_predicate_table",
                             "params": {"table": [[1, 1, 1], [0, 1, 1], [0, 0, 1]]}})
    slow = write("q1.json", {"space": {"range": 3}, "rates": [{"1": "1/3"}, {"0": 1, "2": "1/3"}, {"1": 1}]})
    fast = write("q2.json", {"space": {"range": 3}, "rates": [{"1": "1/2"}, {"0": 1, "2": "1/2"}, {"1": 1}]})
    code, out, _ = run("stationary-compare", rel, slow, fast)
    doc = json.loads(out)
    assert code == 0 and doc["status"] == "related"
    assert sum(Fraction(p) for p in doc["pi1"]) == 1


def test_stationary_compare_queueing_default(run):
    code, out, _ = run("stationary-compare", "--queueing")
    doc = json.loads(out)
    assert code == 0 and doc["related"] and doc["status"] == "related"


def _population_files(write):
    box = [[0, 3], [0, 3]]
    lb = write("lb.json", {"m": 2, "box": box, "rates": {"0,1": "1/2", "0,2": "1/2", "1,0": "ind(x[1] > 0)", "2,0": "ind(x[2] > 0)"}})
    ind = write("ind.json", {"m": 2, "box": box, "rates": {"0,1": "1/2", "0,2": "1/2", "1,0": "1/2*ind(x[1] > 0)", "2,0": "1/2*ind(x[2] > 0)"}})
    rel = write("rel.json", {"left": {"grid": box}, "kind": "coordinatewise_leq"})
    return rel, lb, ind


def test_population_check_forms(run, write):
    rel, fast_service, slow_service = _population_files(write)
    assert run("population-check", rel, fast_service, slow_service)[0] == 0
    code, out, _ = run("population-check", rel, slow_service, fast_service)
    assert code == 1 and json.loads(out)["failures"][0]["labels"]
    assert run("population-check", "--partial-order", "1,2", fast_service, slow_service)[0] == 0
    assert run("population-check", "--partial-order", "1,2", slow_service, fast_service)[0] == 1
    assert run("population-check", "--partial-order", "1", rel, fast_service, slow_service)[0] == 2


def test_reproduce_queueing_small(run):
    code, out, err = run("reproduce-queueing", "--cap", "10", "--iters", "4", "-v")
    doc = json.loads(out)
    assert code == 0 and doc["all_match"]
    assert [r["status"] for r in doc["iterates"]] == ["MATCH"] * 5
    assert "n=4 MATCH" in err


def test_alpha_props(run):
    code, out, _ = run("alpha-props")
    assert code == 0 and json.loads(out)["holds"]


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "stochrel.cli", "alpha-props", "--lo", "0", "--hi", "1", "--n-max", "0"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["holds"]
