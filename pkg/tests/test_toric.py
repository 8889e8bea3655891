from __future__ import annotations

import json
from fractions import Fraction
from math import comb, factorial
from pathlib import Path

import pytest

from dtvertex import capping, toric
from dtvertex.exactalg import ONE, Q, T1, T2, T3, ZERO, rational_reconstruct, scalar
from dtvertex.partitions import Partition

P = Partition.of
DATA = Path(__file__).resolve().parent.parent / "data" / "conifold.json"


def bernoulli(n: int) -> list[Fraction]:
    B = [Fraction(1)]
    for m in range(1, n + 1):
        B.append(-sum(comb(m + 1, k) * B[k] for k in range(m)) / (m + 1))
    return B


def conifold_product(degree: int, order: int) -> list:
    """Q^degree coefficient of prod_k (1 - (-q)^k Q)^k, expanded through q^order."""
    # coefficients as dict {Q power: list of q coefficients}
    poly = {0: [1] + [0] * order}
    for k in range(1, order + 1):
        for _ in range(k):
            new = {}
            for e, c in poly.items():
                for j, s in ((0, 1), (1, -((-1) ** k))):
                    if e + j > degree:
                        continue
                    row = new.setdefault(e + j, [0] * (order + 1))
                    for n, x in enumerate(c):
                        if x and n + j * k <= order:
                            row[n + j * k] += s * x
            poly = new
    return poly.get(degree, [0] * (order + 1))


def test_conifold_file_matches_builder():
    P1 = toric.ToricPolytope.load(DATA)
    P2 = toric.local_p1(-1, -1)
    assert P1.vertices == P2.vertices
    assert P1.classes == P2.classes


def test_conifold_degree_one_round_trip():
    P1 = toric.ToricPolytope.load(DATA)
    s = toric.assemble_standard_dt(P1, [1], (), 6, reduced=True)
    assert [s.coeff(n) for n in range(7)] == conifold_product(1, 6)
    f = rational_reconstruct(s, 2, 2)
    assert f == Q / (1 + Q) ** 2
    u = toric.correspondence_transform(f, 0, 0, 6)
    assert u == toric.inverse_sine_square(6)


def test_conifold_degree_two_series():
    s = toric.assemble_standard_dt(toric.local_p1(-1, -1), [2], (), 6, reduced=True)
    assert [s.coeff(n) for n in range(7)] == conifold_product(2, 6)


def test_inverse_sine_square_bernoulli():
    # 1/(2 sin(u/2))^2 = sum_g (2g - 1) |B_2g| u^(2g-2) / (2g)!
    B = bernoulli(10)
    u = toric.inverse_sine_square(8)
    for g in range(0, 6):
        want = Fraction(1) if g == 0 else (2 * g - 1) * abs(B[2 * g]) / factorial(2 * g)
        assert u.coeff(2 * g - 2) == scalar(want)


def test_transform_shift_and_imaginary_residue():
    u = toric.correspondence_transform(Q / (1 + Q) ** 2, 0, 2, 4)
    base = toric.inverse_sine_square(6)
    # dividing by (-iu)^2 = -u^2 shifts and negates
    for k in range(-4, 5):
        assert u.coeff(k) == -base.coeff(k + 2)
    with pytest.raises(toric.ResidualImaginary):
        toric.correspondence_transform(Q / (1 + Q) ** 2, 0, 1, 4)


@pytest.mark.parametrize("ab", [(-1, -1), (0, -2), (1, -3)])
def test_capped_assembly_matches_standard(ab):
    X = toric.local_p1(*ab)
    capped = toric.assemble_capped_dt(X, [1], (), capping.polytope_capped_data(X, 4))
    std = toric.assemble_standard_dt(X, [1], (), 4, reduced=True)
    assert [capped.coeff(n) for n in range(5)] == [std.coeff(n) for n in range(5)]


def test_capped_assembly_needs_data():
    with pytest.raises(toric.MissingCappedDatum):
        toric.assemble_capped_dt(toric.local_p1(-1, -1), [1], (), {})


def test_degree0_exponent():
    assert toric.degree0_exponent(toric.c3_polytope()) == -(T1 + T2) * (T1 + T3) * (T2 + T3) / (T1 * T2 * T3)
    s = toric.degree_zero_series(toric.c3_polytope(), 3)
    assert s.coeff(1) == -toric.degree0_exponent(toric.c3_polytope())


def test_point_insertion_factor():
    X = toric.local_p1(-1, -1)
    m = toric.CappedMarking(((("e", 0), P(1)),))
    pt = toric.InsertionClass.point_class(X, "v0")
    assert toric.insertion_factor(X, m, [pt], standard=True) == T1 * T2


def test_edge_degrees_and_markings():
    X = toric.local_p1(-1, -1)
    assert toric.edge_degrees(X, [2]) == [{"e": 2}]
    marks = list(toric.enumerate_markings(X, [2]))
    assert len(marks) == 4 and all(m.is_balanced() for m in marks)
    assert len(list(toric.enumerate_markings(X, [2], standard=True))) == 2
    with pytest.raises(toric.InfeasibleClass):
        toric.edge_degrees(X, [-1])
    with pytest.raises(toric.InfeasibleClass):
        toric.edge_degrees(X, [1, 0])


def test_polytope_validation(tmp_path):
    data = json.loads(DATA.read_text())
    data["vertices"][1]["weights"][0] = [1, 0, 0]
    with pytest.raises(toric.PolytopeError):
        toric.ToricPolytope.from_dict(data)
    data = json.loads(DATA.read_text())
    data["edges"] = [e for e in data["edges"] if e["id"] != "o0"]
    with pytest.raises(toric.PolytopeError):
        toric.ToricPolytope.from_dict(data)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(toric.PolytopeError):
        toric.ToricPolytope.load(bad)


def test_degeneration_check_trivial_gluing():
    left = {P(1): ONE}
    right = {P(1): T1}
    rep = toric.degeneration_check(left, right, 1, glued=T1 / Q)
    assert rep.ok
    rep = toric.degeneration_check(left, right, 1, glued=ZERO)
    assert not rep.ok and rep.residuals["total"] == -T1 / Q
