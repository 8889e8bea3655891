from __future__ import annotations

import random

import pytest

from dtvertex.exactalg import ExactScalar, T1, T2, T3, Q


@pytest.fixture
def rng():
    return random.Random(20261019)


def random_scalar(rng: random.Random, terms: int = 3) -> ExactScalar:
    gens = [T1, T2, T3, Q]

    def poly():
        acc = ExactScalar(rng.randint(-3, 3))
        for _ in range(terms):
            mono = ExactScalar(rng.randint(-4, 4) or 1)
            for g in gens:
                mono = mono * g ** rng.randint(0, 2)
            acc = acc + mono
        return acc

    den = poly()
    while not den:
        den = poly()
    return poly() / den


@pytest.fixture(scope="session")
def tier1_table():
    """Starred capped vertices for the unconditional R rows and their sub-triples."""
    from dtvertex import capping
    from dtvertex.cli import TIER1
    return capping.compute_table(TIER1)


@pytest.fixture(scope="session")
def rubber_grade3():
    """Rubber solution S(q) at grade <= 3 through q^10 with its defining operators."""
    from dtvertex import capping
    from dtvertex.exactalg import T1, T2, T3
    from dtvertex.fock import GradedOperator, m_block

    M = GradedOperator({d: m_block(T1, T2, d) for d in range(4)}, 3)
    M0 = capping.m_operator_at_zero(T1, T2, 3)

    def eig(d):
        e = capping.m0_eigen(T1, T2, d)
        return e, e

    op = capping.solve_edge_ode(M0, M, GradedOperator.identity(3), T3, 10, eigen=eig)
    return op, M0, M


ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status:4s} {text}")
