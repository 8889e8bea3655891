"""Torus characters, the box-counting DT vertex, and DT/GW edge weights.

Conventions: a box p of a plane partition contributes the monomial s^p with
s_i = exp(-t_i), so its torus weight is -(p . t).  Characters are stored by
weight vectors a (meaning exp(a . t)); the Euler class of a character is the
product of the linear forms a . t raised to the multiplicities.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import flint

from .exactalg import CTX, ExactScalar, QSeries, ONE, ZERO, Q, QH, scalar
from .partitions import (
    EMPTY, LEG_FRAME, LeggedBoxConfig, Partition, centralizer_order, enumerate_legged,
    minimal_volume,
)
from . import symfunc


class VertexError(Exception):
    code = "vertex"


class TruncationTooSmall(VertexError):
    code = "TruncationTooSmall"


class NonFiniteCharacter(VertexError):
    code = "NonFiniteCharacter"


class ZeroWeight(VertexError):
    code = "ZeroWeight"


STANDARD_WEIGHTS = ((1, 0, 0), (0, 1, 0), (0, 0, 1))

# ---------------------------------------------------------------------------
# characters


class EquivCharacter:
    """sum mult * exp(a . t) over weight vectors a with rational entries."""

    __slots__ = ("terms", "denominator_scale")

    def __init__(self, terms=None, denominator_scale: int = 1):
        clean = {}
        for a, m in (terms or {}).items():
            if m:
                clean[tuple(Fraction(x) for x in a)] = clean.get(tuple(Fraction(x) for x in a), 0) + m
        self.terms = {a: m for a, m in clean.items() if m}
        self.denominator_scale = denominator_scale

    def bar(self) -> "EquivCharacter":
        return EquivCharacter({tuple(-x for x in a): m for a, m in self.terms.items()}, self.denominator_scale)

    def __neg__(self):
        return EquivCharacter({a: -m for a, m in self.terms.items()}, self.denominator_scale)

    def __add__(self, other: "EquivCharacter"):
        t = dict(self.terms)
        for a, m in other.terms.items():
            t[a] = t.get(a, 0) + m
        return EquivCharacter(t, math.lcm(self.denominator_scale, other.denominator_scale))

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        return isinstance(other, EquivCharacter) and self.terms == other.terms

    def __len__(self):
        return len(self.terms)

    def rank(self) -> int:
        return sum(self.terms.values())

    def __repr__(self):
        items = ", ".join(f"{tuple(str(x) for x in a)}:{m}" for a, m in sorted(self.terms.items()))
        return f"EquivCharacter({{{items}}})"


# --- factored weight products -------------------------------------------------


def _primitive(a: Sequence[Fraction]) -> tuple[Fraction, tuple[int, ...]]:
    """Split a . t as c * (primitive integer form with positive leading entry)."""
    den = 1
    for x in a:
        den = math.lcm(den, Fraction(x).denominator)
    ints = [int(Fraction(x) * den) for x in a]
    g = 0
    for x in ints:
        g = math.gcd(g, x)
    if g == 0:
        raise ZeroWeight(f"zero weight {tuple(str(x) for x in a)}")
    prim = [x // g for x in ints]
    lead = next(x for x in prim if x)
    if lead < 0:
        prim = [-x for x in prim]
        g = -g
    return Fraction(g, den), tuple(prim)


class Factored:
    """const * prod form^exp, forms primitive integer linear forms in t."""

    __slots__ = ("const", "exps")

    def __init__(self, const=Fraction(1), exps=None):
        self.const = Fraction(const)
        self.exps = Counter(exps or {})

    @classmethod
    def from_character(cls, ch: EquivCharacter) -> "Factored":
        out = cls()
        for a, m in ch.terms.items():
            c, f = _primitive(a)
            out.const *= c**m
            out.exps[f] += m
        return out

    def __mul__(self, other: "Factored") -> "Factored":
        e = Counter(self.exps)
        e.update(other.exps)
        return Factored(self.const * other.const, e)

    def to_scalar(self) -> ExactScalar:
        return sum_factored([self])


@lru_cache(maxsize=None)
def _form_poly(f: tuple[int, ...]):
    g = CTX.gens()
    return f[0] * g[0] + f[1] * g[1] + f[2] * g[2]


@lru_cache(maxsize=None)
def _form_pow(f: tuple[int, ...], k: int):
    return _form_poly(f) ** k


def _leaf(x: Factored):
    one = CTX.from_dict({(0, 0, 0, 0): 1})
    num = one * flint.fmpq(x.const.numerator, x.const.denominator)
    den = Counter()
    for f, e in x.exps.items():
        if e > 0:
            num = num * _form_pow(f, e)
        elif e < 0:
            den[f] = -e
    return num, den


def _add_fractions(a, b):
    """Sum of two (numerator, {form: exponent}) fractions, cancelling linear factors."""
    na, da = a
    nb, db = b
    D = da | db
    one = CTX.from_dict({(0, 0, 0, 0): 1})
    ma, mb = one, one
    for f, e in D.items():
        if e - da.get(f, 0):
            ma = ma * _form_pow(f, e - da.get(f, 0))
        if e - db.get(f, 0):
            mb = mb * _form_pow(f, e - db.get(f, 0))
    n = na * ma + nb * mb
    if n.is_zero():
        return n, Counter()
    D = Counter(D)
    # with both inputs reduced, f can only cancel when its exponents agree
    for f in [f for f, e in da.items() if db.get(f) == e]:
        p = _form_poly(f)
        while D[f]:
            quo, rem = divmod(n, p)
            if not rem.is_zero():
                break
            n = quo
            D[f] -= 1
    return n, +D


def sum_factored(items: Iterable[Factored]) -> ExactScalar:
    """Exact sum of factored terms.

    Terms sorted by denominator are added pairwise in a balanced tree and
    linear factors are cancelled after each addition, which keeps the
    intermediate numerators small.
    """
    leaves = [_leaf(x) for x in items if x.const]
    if not leaves:
        return ZERO
    leaves.sort(key=lambda x: sorted(x[1].items()))
    while len(leaves) > 1:
        leaves = [_add_fractions(leaves[i], leaves[i + 1]) if i + 1 < len(leaves) else leaves[i]
                  for i in range(0, len(leaves), 2)]
    num, den_exp = leaves[0]
    den = CTX.from_dict({(0, 0, 0, 0): 1})
    for f, k in den_exp.items():
        den = den * _form_pow(f, k)
    return ExactScalar(num, den)


def weight_product(ch: EquivCharacter, weights=STANDARD_WEIGHTS) -> ExactScalar:
    """prod (a . t)^mult; `weights` re-expresses the local t_i in a global lattice."""
    return Factored.from_character(map_character(ch, weights)).to_scalar()


def map_character(ch: EquivCharacter, weights) -> EquivCharacter:
    if tuple(map(tuple, weights)) == STANDARD_WEIGHTS:
        return ch
    out = {}
    for a, m in ch.terms.items():
        g = tuple(sum(Fraction(a[i]) * weights[i][j] for i in range(3)) for j in range(3))
        out[g] = out.get(g, 0) + m
    return EquivCharacter(out, ch.denominator_scale)


# ---------------------------------------------------------------------------
# Laurent polynomials in s = exp(-t): dict exponent tuple -> int


def _lmul(a: dict, b: dict) -> dict:
    out: dict = defaultdict(int)
    for ea, ca in a.items():
        for eb, cb in b.items():
            out[tuple(x + y for x, y in zip(ea, eb))] += ca * cb
    return {e: c for e, c in out.items() if c}


def _ladd(*ps: dict, signs=None) -> dict:
    out: dict = defaultdict(int)
    signs = signs or [1] * len(ps)
    for p, s in zip(ps, signs):
        for e, c in p.items():
            out[e] += s * c
    return {e: c for e, c in out.items() if c}


def _lbar(a: dict) -> dict:
    return {tuple(-x for x in e): c for e, c in a.items()}


def _ldiv_one_minus(f: dict, axis: int, inverse: bool = False) -> dict:
    """Exact quotient f / (1 - s_axis) (or by 1 - s_axis^{-1}); raises if not exact."""
    lines: dict = defaultdict(list)
    for e, c in f.items():
        rest = e[:axis] + e[axis + 1:]
        lines[rest].append((e[axis], c))
    out = {}
    for rest, entries in lines.items():
        entries.sort(reverse=inverse)
        acc = 0
        prev = None
        coeffs = dict(entries)
        lo, hi = entries[0][0], entries[-1][0]
        step = -1 if inverse else 1
        k = lo
        while True:
            acc += coeffs.get(k, 0)
            if k == hi:
                break
            if acc:
                e = rest[:axis] + (k,) + rest[axis:]
                out[e] = acc
            k += step
        if acc:
            raise NonFiniteCharacter(f"division by (1 - s{axis + 1}{'^-1' if inverse else ''}) not exact")
    return out


def _one_minus_s(axes: Iterable[int], dim: int = 3) -> dict:
    p = {(0,) * dim: 1}
    for ax in axes:
        e = [0] * dim
        e[ax] = 1
        p = _lmul(p, {(0,) * dim: 1, tuple(e): -1})
    return p


def chi_character(c: LeggedBoxConfig, N: int) -> EquivCharacter:
    if N < c.support():
        raise TruncationTooSmall(f"N={N} below support {c.support()}")
    return EquivCharacter({tuple(-x for x in p): 1 for p in c.points_in_cube(N)})


def _k_poly(c: LeggedBoxConfig) -> dict:
    """K-polynomial sum_{p in pi} s^p prod(1 - s_i), computed on a cube."""
    N = c.support() + 2
    Q = {p: 1 for p in c.points_in_cube(N)}
    K = _lmul(Q, _one_minus_s(range(3)))
    return {e: v for e, v in K.items() if max(e) < N}


def _k_poly_fast(legs, boxes) -> dict:
    """K-polynomial without scanning a cube: boxes plus leg cross-sections."""
    Qf = {p: 1 for p in boxes}
    K = _lmul(Qf, _ONE_MINUS_ALL)
    for ax, lam in enumerate(legs):
        if lam:
            K = _ladd(K, _leg_k3(ax, lam))
    # leg overlaps are counted twice in the sum of leg K's: fix by direct finite correction
    corr = _overlap_correction(tuple(legs))
    if corr:
        K = _ladd(K, corr)
    return K


_ONE_MINUS_ALL = _one_minus_s(range(3))


@lru_cache(maxsize=None)
def _leg_k2(lam: Partition) -> tuple:
    """2D K-polynomial of the cross-section: sum_{(i,j)} u^i v^j (1-u)(1-v)."""
    Qd = {(i, j): 1 for i, j in lam.cells()}
    return tuple(_lmul(Qd, _one_minus_s(range(2), dim=2)).items())


@lru_cache(maxsize=None)
def _leg_k3(axis: int, lam: Partition) -> dict:
    a, b = LEG_FRAME[axis]
    out = {}
    for (i, j), c in _leg_k2(lam):
        e = [0, 0, 0]
        e[a], e[b] = i, j
        out[tuple(e)] = c
    return out


@lru_cache(maxsize=None)
def _overlap_correction(legs: tuple) -> dict:
    """K(cylinder union) - sum of single-leg K's, a finite Laurent polynomial."""
    if sum(1 for l in legs if l) < 2:
        return {}
    full = _k_poly(LeggedBoxConfig(legs))
    parts = [_leg_k3(ax, lam) for ax, lam in enumerate(legs) if lam]
    return _ladd(full, *parts, signs=[1] + [-1] * len(parts))


def _tangent_laurent(legs, boxes) -> dict:
    """Equivariant vertex character V (Laurent polynomial in s), tangent-minus-obstruction."""
    K = _k_poly_fast(legs, boxes)
    Kb = _lbar(K)
    total = _ladd(K, Kb, _lmul(K, Kb), signs=[1, 1, -1])
    for ax, lam in enumerate(legs):
        if lam:
            total = _ladd(total, _leg_self_term(ax, lam), signs=[1, -1])
    for ax in range(3):
        total = _ldiv_one_minus(total, ax)
    return total


@lru_cache(maxsize=None)
def _leg_self_term_cached(axis: int, lam: Partition) -> tuple:
    Ki = _leg_k3(axis, lam)
    Kib = _lbar(Ki)
    return tuple(_ladd(Ki, Kib, _lmul(Ki, Kib), signs=[1, 1, -1]).items())


def _leg_self_term(axis, lam) -> dict:
    return dict(_leg_self_term_cached(axis, lam))


def vertex_virtual_character(c: LeggedBoxConfig) -> EquivCharacter:
    """Ext2 - Ext1 character of the vertex: the negative of the tangent character."""
    V = _tangent_laurent(c.legs, c.boxes)
    return EquivCharacter({tuple(e): -m for e, m in V.items()})


def vertex_weight(c: LeggedBoxConfig, weights=STANDARD_WEIGHTS) -> Factored:
    """e(-V) as a factored product; a box monomial s^e has global weight -sum e_i w_i."""
    V = _tangent_laurent(c.legs, c.boxes)
    out = Factored()
    for e, m in V.items():
        g = tuple(-sum(e[i] * weights[i][j] for i in range(3)) for j in range(3))
        cst, f = _primitive(g)
        out.const *= cst ** (-m)
        out.exps[f] -= m
    return out


def dt_vertex_series(legs: Sequence[Partition], weights=STANDARD_WEIGHTS, cutoff: int = 4) -> QSeries:
    """sum over configurations of e(-V) q^{renormalized volume}, known through q^cutoff."""
    legs = tuple(legs)
    buckets: dict[int, list[Factored]] = defaultdict(list)
    for cfg in enumerate_legged(legs, cutoff):
        buckets[cfg.renormalized_volume].append(vertex_weight(cfg, weights))
    terms = {n: sum_factored(items) for n, items in buckets.items()}
    return QSeries.from_q_dict(terms, cutoff)


# ---------------------------------------------------------------------------
# Chern character restrictions


def _poly_taylor_degree(K: dict, k: int) -> ExactScalar:
    """Degree-k part of sum c_e exp(-(e . t))."""
    g = CTX.gens()
    acc = CTX.from_dict({})
    for e, c in K.items():
        lin = -(e[0] * g[0] + e[1] * g[1] + e[2] * g[2])
        acc = acc + c * lin**k
    return ExactScalar(acc) / math.factorial(k)


def chern_restriction(c: LeggedBoxConfig, k: int, degrees: Sequence[int] | None = None) -> ExactScalar:
    """ch_k of the ideal sheaf at the fixed point; for k = 2 the value c2 = -ch2."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if degrees is not None and tuple(degrees) != tuple(l.size for l in c.legs):
        raise ValueError(f"degrees {tuple(degrees)} disagree with legs")
    K = _k_poly_fast(c.legs, c.boxes)
    part = _poly_taylor_degree(K, k)
    return part if k == 2 else -part


def taylor_k_poly(legs, boxes) -> dict:
    """Independent K-polynomial from the Taylor resolution of the monomial ideal."""
    cfg = LeggedBoxConfig(tuple(legs), frozenset(boxes))
    N = cfg.support() + 1
    gens = []
    for x in range(N + 1):
        for y in range(N + 1):
            for z in range(N + 1):
                p = (x, y, z)
                if p in cfg:
                    continue
                if all(
                    (x - (i == 0), y - (i == 1), z - (i == 2)) in cfg
                    for i in range(3) if p[i] > 0
                ):
                    gens.append(p)
    # K(O/I) = sum over nonempty subsets S of gens of (-1)^{|S|+1} s^{lcm S}, subtracted from 1
    out: dict = defaultdict(int)
    out[(0, 0, 0)] += 1
    n = len(gens)

    def rec(i, lcm, size):
        if i == n:
            if size:
                out[lcm] += (-1) ** size
            return
        rec(i + 1, lcm, size)
        g = gens[i]
        rec(i + 1, tuple(max(a, b) for a, b in zip(lcm, g)) if size else g, size + 1)

    rec(0, (0, 0, 0), 0)
    return {e: v for e, v in out.items() if v}


# ---------------------------------------------------------------------------
# DT edge


def _t2_laurent(lam: Partition) -> dict:
    """2D tangent character (K + Kbar - K Kbar)/((1-u)(1-v)) in (u, v)."""
    K = dict(_leg_k2(lam))
    Kb = _lbar(K)
    tot = _ladd(K, Kb, _lmul(K, Kb), signs=[1, 1, -1])
    tot = _ldiv_one_minus(tot, 0)
    return _ldiv_one_minus(tot, 1)


def edge_tangent_laurent(lam: Partition, a: int, b: int) -> dict:
    """Tangent character of the edge in (s1, s2, s3) of the vertex at the 0-end.

    E = [T2(s1 s3^-a, s2 s3^-b) - s3^-1 T2(s1, s2)] / (1 - s3^-1).
    """
    T2 = _t2_laurent(lam)
    num: dict = defaultdict(int)
    for (i, j), c in T2.items():
        num[(i, j, -a * i - b * j)] += c
        num[(i, j, -1)] -= c
    num = {e: c for e, c in num.items() if c}
    return _ldiv_one_minus(num, 2, inverse=True) if num else {}


def edge_character_dt(lam: Partition, a: int, b: int) -> EquivCharacter:
    """Ext2 - Ext1 character of the edge (negated tangent character), as t-weights."""
    T = edge_tangent_laurent(lam, a, b)
    return EquivCharacter({tuple(-x for x in e): -m for e, m in T.items()})


def edge_chi(lam: Partition, a: int, b: int) -> int:
    return sum(1 - a * i - b * j for i, j in lam.cells())


def edge_weight_dt(lam: Partition, a: int, b: int, weights=STANDARD_WEIGHTS) -> tuple[ExactScalar, int]:
    """(weight, q-exponent) of the DT edge."""
    if not lam:
        return ONE, 0
    ch = map_character(edge_character_dt(lam, a, b), weights)
    return Factored.from_character(ch).to_scalar(), edge_chi(lam, a, b)


# ---------------------------------------------------------------------------
# GW edge


def edge_character_gw(lam: Partition, a: int, b: int) -> EquivCharacter:
    """H^1 - H^0 of f*T_X for the degree-lam_i covers, zero weight removed."""
    terms: dict = defaultdict(int)
    scale = 1
    for part in lam.parts:
        scale = math.lcm(scale, part)
        s = (Fraction(0), Fraction(0), Fraction(1, part))
        # direction k: weight w at 0 and w - n s at infinity, n = deg * part
        for w, n in (((1, 0, 0), a * part), ((0, 1, 0), b * part), ((0, 0, 1), 2 * part)):
            if n + 1 > 0:
                for k in range(n + 1):
                    terms[tuple(Fraction(w[i]) - k * s[i] for i in range(3))] -= 1
            elif n + 1 < 0:
                for k in range(1, -(n + 1) + 1):
                    terms[tuple(Fraction(w[i]) + k * s[i] for i in range(3))] += 1
        terms[(Fraction(0),) * 3] += 1
    return EquivCharacter(dict(terms), scale)


def edge_weight_gw(lam: Partition, a: int, b: int, weights=STANDARD_WEIGHTS) -> tuple[ExactScalar, int]:
    """(weight, u-exponent): u^{-2 l(lam)} / z(lam) * e(H^1 - H^0) * endpoint fields."""
    if not lam:
        return ONE, 0
    ch = map_character(edge_character_gw(lam, a, b), weights)
    val = Factored.from_character(ch)
    t3w = weights[2]
    for part in lam.parts:
        c, f = _primitive(tuple(Fraction(x, part) for x in t3w))
        val.const *= -(c * c)
        val.exps[f] += 2
    val.const /= centralizer_order(lam)
    return val.to_scalar(), -2 * lam.length


# ---------------------------------------------------------------------------
# topological vertex (CY specialization) in Schur form


def two_leg_topvertex(lam: Partition, mu: Partition) -> ExactScalar:
    """sum_eta s_{lam^t/eta}(q^rho) s_{mu/eta}(q^rho)."""
    return symfunc.two_leg_entry(lam, mu)
