from __future__ import annotations

import itertools
import random

import pytest

from dtvertex import toric
from dtvertex.capping import permute_scalar
from dtvertex.exactalg import ONE, QH, T1, T2, T3, ZERO, ExactScalar, series_expand, substitute_cy
from dtvertex.fock import macmahon_power
from dtvertex.partitions import (
    EMPTY, LeggedBoxConfig, Partition, minimal_volume, partitions_upto, transpose,
)
from dtvertex.vertex import (
    EquivCharacter, _poly_taylor_degree, chern_restriction, dt_vertex_series,
    edge_chi, edge_weight_dt, edge_weight_gw, taylor_k_poly, two_leg_topvertex, vertex_virtual_character,
)

P = Partition.of
EVEN = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]


def addable(cfg: LeggedBoxConfig) -> list:
    N = cfg.support() + 1
    out = []
    for p in itertools.product(range(N), repeat=3):
        if p in cfg:
            continue
        if all(tuple(p[j] - (j == i) for j in range(3)) in cfg for i in range(3) if p[i] > 0):
            out.append(p)
    return out


def random_config(rng: random.Random, legs, extra: int) -> LeggedBoxConfig:
    cfg = LeggedBoxConfig(tuple(legs))
    for _ in range(extra):
        cfg = LeggedBoxConfig(cfg.legs, cfg.boxes | {rng.choice(addable(cfg))})
    return cfg


def macmahon_oracle(c: ExactScalar, order: int) -> list:
    """Coefficients of M(-q)^c from exp(c * sum sigma_2(m) (-q)^m / m)."""
    log = [ZERO] + [c * sum(d * d for d in range(1, m + 1) if m % d == 0) * (-1) ** m / m
                    for m in range(1, order + 1)]
    # exp via f' = log' f
    f = [ONE] + [ZERO] * order
    for n in range(1, order + 1):
        f[n] = sum((k * log[k] * f[n - k] for k in range(1, n + 1)), ZERO) / n
    return f


def test_degree_zero_vertex_closed_form():
    s = dt_vertex_series((EMPTY,) * 3, cutoff=6)
    c = toric.degree0_exponent(toric.c3_polytope())
    assert c == -(T1 + T2) * (T1 + T3) * (T2 + T3) / (T1 * T2 * T3)
    want = macmahon_oracle(c, 6)
    assert [s.coeff(n) for n in range(7)] == want
    assert s == macmahon_power(c, 6)


def test_vertex_character_is_finite_laurent():
    cfg = LeggedBoxConfig((P(1), EMPTY, EMPTY), frozenset({(0, 1, 0)}))
    V = vertex_virtual_character(cfg)
    assert isinstance(V, EquivCharacter)
    assert all(isinstance(k, tuple) and len(k) == 3 for k in V.terms)


def test_ch2_formula_bare_legs():
    for legs in itertools.product(partitions_upto(3), repeat=3):
        cfg = LeggedBoxConfig(legs)
        d1, d2, d3 = (l.size for l in legs)
        want = T1 * T2 * d3 + T1 * d2 * T3 + d1 * T2 * T3
        assert chern_restriction(cfg, 2) == want
        oracle = _poly_taylor_degree(taylor_k_poly(legs, cfg.boxes), 2)
        assert chern_restriction(cfg, 2) == oracle


def test_ch2_formula_with_random_boxes(rng):
    pool = partitions_upto(3)
    for _ in range(50):
        legs = tuple(rng.choice(pool) for _ in range(3))
        cfg = random_config(rng, legs, rng.randint(1, 4))
        assert cfg.is_valid()
        d1, d2, d3 = (l.size for l in legs)
        assert chern_restriction(cfg, 2) == T1 * T2 * d3 + T1 * d2 * T3 + d1 * T2 * T3
        assert chern_restriction(cfg, 2) == _poly_taylor_degree(taylor_k_poly(legs, cfg.boxes), 2)


def test_ch3_matches_oracle(rng):
    for _ in range(10):
        legs = tuple(rng.choice(partitions_upto(2)) for _ in range(3))
        cfg = random_config(rng, legs, rng.randint(0, 3))
        assert chern_restriction(cfg, 3) == -_poly_taylor_degree(taylor_k_poly(legs, cfg.boxes), 3)


def test_ch2_bad_arguments():
    cfg = LeggedBoxConfig((P(1), EMPTY, EMPTY))
    with pytest.raises(ValueError):
        chern_restriction(cfg, 1)
    with pytest.raises(ValueError):
        chern_restriction(cfg, 2, degrees=(0, 0, 0))


@pytest.mark.parametrize("legs", [(P(1), EMPTY, EMPTY), (P(2), P(1), EMPTY), (P(1, 1), P(1), P(1))])
def test_vertex_s3_covariance(legs):
    lo = minimal_volume(legs)
    base = dt_vertex_series(legs, cutoff=lo + 2)
    for perm in itertools.permutations(range(3)):
        new = [None] * 3
        for i in range(3):
            new[perm[i]] = legs[i]
        # odd permutations reverse each cross-section's orientation
        new = tuple(l if perm in EVEN else transpose(l) for l in new)
        shift = minimal_volume(new) - lo
        s = dt_vertex_series(new, cutoff=minimal_volume(new) + 2)
        for n in range(lo, lo + 3):
            assert s.coeff(n + shift) == permute_scalar(base.coeff(n), perm)


EDGE_CASES = [(lam, a, b) for lam in (P(1), P(2), P(1, 1), P(2, 1), P(3, 1))
              for a, b in ((-1, -1), (0, -2), (1, -3), (2, 0))]


@pytest.mark.parametrize("lam,a,b", EDGE_CASES)
def test_edge_weight_orientation(lam, a, b):
    w, chi = edge_weight_dt(lam, a, b)
    # the same edge seen from its other end: weights (t1 - a t3, t2 - b t3, -t3)
    far = ((1, 0, -a), (0, 1, -b), (0, 0, -1))
    assert edge_weight_dt(lam, a, b, far) == (w, chi)
    # swapping the two transverse directions transposes the partition
    swapped = ((0, 1, -b), (1, 0, -a), (0, 0, -1))
    assert edge_weight_dt(transpose(lam), b, a, swapped) == (w, chi)
    assert edge_weight_gw(lam, a, b, far) == edge_weight_gw(lam, a, b)
    assert chi == edge_chi(lam, a, b)


@pytest.mark.parametrize("lam,a,b", EDGE_CASES)
def test_edge_euler_characteristic(lam, a, b):
    # box (i, j) of the thickened curve carries O(-b i - a j)
    cells = [(i, j) for i, row in enumerate(lam.parts) for j in range(row)]
    assert edge_chi(lam, a, b) == sum(1 - a * j - b * i for i, j in cells)


def test_single_leg_vertex_leading_term():
    s = dt_vertex_series((P(1), EMPTY, EMPTY), cutoff=2)
    assert s.valuation() == 0
    assert s.coeff(0) == 1


TWO_LEG = [(l, m) for l in partitions_upto(2) for m in partitions_upto(2) if l.size + m.size] + [(P(2, 1), P(1))]


@pytest.mark.parametrize("lam,mu", TWO_LEG)
def test_cy_specialization_matches_schur_vertex(lam, mu):
    # W(lam, mu, 0)/W(0, 0, 0) at t1 + t2 + t3 = 0, with q -> -q, is
    # (-1)^{|lam|+|mu|} q^{-(|lam|^2 + |mu^t|^2)/2} sum_eta s_{lam/eta} s_{mu^t/eta} at q^rho
    lo = minimal_volume((lam, mu, EMPTY))
    cut = lo + 3
    W0 = dt_vertex_series((EMPTY,) * 3, cutoff=cut - lo).inverse()
    s = (dt_vertex_series((lam, mu, EMPTY), cutoff=cut) * W0).map(substitute_cy)
    norm = sum(x * x for x in lam.parts) + sum(x * x for x in transpose(mu).parts)
    sign = (-1) ** (lam.size + mu.size)
    F = series_expand(sign * QH ** (-norm) * two_leg_topvertex(transpose(lam), transpose(mu)), cut)
    for n in range(lo, cut + 1):
        assert s.coeff(n) == (1 if n % 2 == 0 else -1) * F.coeff(n)
