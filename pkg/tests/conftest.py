import os
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stochrel.coupling import Dist
from stochrel.ctmc import RateKernel
from stochrel.kernels import Kernel
from stochrel.population import PopulationModel
from stochrel.relcore import Relation, build_relation

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def rand_weights(rng, n, zero_prob=0.3, top=6):
    w = [0 if rng.random() < zero_prob else rng.randint(1, top) for _ in range(n)]
    if not any(w):
        w[rng.randrange(n)] = 1
    return w


def rand_dist(rng, space, zero_prob=0.3):
    w = rand_weights(rng, len(space), zero_prob)
    total = sum(w)
    return Dist(space, tuple(Fraction(v, total) for v in w))


def rand_relation(rng, left, right, p=None):
    p = rng.choice([0.2, 0.4, 0.6]) if p is None else p
    bits = np.array([[rng.random() < p for _ in range(len(right))] for _ in range(len(left))], dtype=bool)
    return Relation(left, right, bits)


def rand_kernel(rng, source, target, zero_prob=0.4):
    rows = []
    for _ in range(len(source)):
        w = rand_weights(rng, len(target), zero_prob, top=4)
        total = sum(w)
        rows.append({j: Fraction(v, total) for j, v in enumerate(w) if v})
    return Kernel(source, target, tuple(rows))


def rand_rate_kernel(rng, space, zero_prob=0.5):
    n = len(space)
    rows = []
    for i in range(n):
        rows.append({j: Fraction(rng.randint(1, 6), rng.choice([1, 2, 3])) for j in range(n) if j != i and rng.random() > zero_prob})
    return RateKernel.from_rates(space, rows)


def rand_expr(rng, m):
    c = Fraction(rng.randint(1, 6), rng.randint(1, 3))
    k = rng.randint(1, m)
    return rng.choice([f"{c}", f"{c}*ind(x[{k}] > {rng.randint(0, 2)})", f"{c}*x[{k}]", "0"])


def rand_model(rng, m=2, hi=3, transfers=True):
    pairs = [(i, j) for i in range(m + 1) for j in range(m + 1) if i != j and (transfers or 0 in (i, j))]
    rates = {f"{i},{j}": rand_expr(rng, m) for i, j in pairs if rng.random() < 0.7}
    return PopulationModel(m, [[0, hi]] * m, rates)


def rand_model_relation(rng, space):
    kind = rng.choice(["sum_leq", "weak_majorization", "coordinatewise_leq", "coordinatewise_leq", "random"])
    if kind == "coordinatewise_leq":
        return build_relation(kind, space, coords=rng.choice([[1], [2], [1, 2]]))
    if kind == "random":
        R = build_relation("sum_leq", space)
        keep = np.array([[rng.random() < 0.9 for _ in range(len(space))] for _ in range(len(space))])
        return R.with_bits(R.bits & keep)
    return build_relation(kind, space)


@pytest.fixture
def rng():
    return random.Random(20240611)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
