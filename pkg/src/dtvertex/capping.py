"""Capped edges and vertices, rubber ODEs, external operator data and the R-normalization.

A capped vertex is computed here from box-counting vertices: each nonempty leg
is closed off by a relative cap, which localizes to the fixed points alpha of
Hilb(C^2) weighted by

    cap(alpha, lam) = sum_kappa <[alpha], kappa> S(q)_{kappa, lam} / e(T_alpha),

where S solves the rubber equation  c q S' = S M(w1, w2) - M0 S,  S(0) = Id,
with c the tangent weight of the P^1 at the relative divisor (c = -t_k for a
cap glued to the leg along axis k) and (w1, w2) the transverse weights.  Capped edges use the same cap at both ends.
"""

from __future__ import annotations

import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .exactalg import (
    AmbiguousFit, ExactScalar, NoFit, ONE, Q, QSeries, SingularSystem, T1, T2, T3, ZERO,
    linear_form, rational_reconstruct, scalar, series_expand, solve_linear,
)
from .fock import (
    GradedOperator, fixed_point_classes, m0_eigenvalue, m_block, macmahon_power, pairing_c2,
    tangent_euler,
)
from .partitions import (
    EMPTY, LEG_FRAME, Partition, centralizer_order, minimal_volume, partitions_of,
)
from . import vertex as vx


class CappingError(Exception):
    code = "CappingError"


class SingularRecursion(CappingError):
    code = "SingularRecursion"


class InconsistentSystem(CappingError):
    code = "InconsistentSystem"


class RankDeficient(CappingError):
    code = "RankDeficient"


class MissingExternalData(CappingError):
    code = "MissingExternalData"


class MissingSubTriple(CappingError):
    code = "MissingSubTriple"


Triple = tuple[Partition, Partition, Partition]


# ---------------------------------------------------------------------------
# matrices of series


def _zero(order_half: int) -> QSeries:
    return QSeries(0, [], order_half)


def _matmul(A, B):
    n, m, p = len(A), len(B), len(B[0])
    return [[sum((A[i][k] * B[k][j] for k in range(m) if A[i][k] and B[k][j]), ZERO) for j in range(p)]
            for i in range(n)]


def _coefficient_matrices(block, order: int) -> list:
    """Per-q-power constant matrices of a block with rational or series entries."""
    n = len(block)
    ser = [[x if isinstance(x, QSeries) else series_expand(scalar(x), order) for x in row] for row in block]
    return [[[ser[i][j].coeff(k) for j in range(n)] for i in range(n)] for k in range(order + 1)]


def _sylvester(A0, B0, c: ExactScalar, R, eig=None):
    """Solve c X - A0 X + X B0 = R for X.

    eig = ((PA, PAi, a), (PB, PBi, b)) with A0 = PA diag(a) PAi and likewise
    for B0 decouples the system entrywise.
    """
    n = len(A0)
    if eig is not None:
        (PA, PAi, a), (PB, PBi, b) = eig
        Y = _matmul(_matmul(PAi, R), PB)
        for i in range(n):
            for j in range(n):
                f = c - a[i] + b[j]
                if not f:
                    # resonant: inconsistent, or consistent but undetermined
                    raise SingularRecursion(f"resonant entry ({i}, {j})")
                Y[i][j] = Y[i][j] / f
        return _matmul(_matmul(PA, Y), PBi)
    idx = [(i, j) for i in range(n) for j in range(n)]
    rows = []
    for i, j in idx:
        row = []
        for k, l in idx:
            v = c if (i, j) == (k, l) else ZERO
            if j == l:
                v = v - A0[i][k]
            if i == k:
                v = v + B0[l][j]
            row.append(v)
        rows.append(row)
    try:
        x = solve_linear(rows, [R[i][j] for i, j in idx])
    except SingularSystem as exc:
        raise SingularRecursion(str(exc)) from exc
    return [[x[i * n + j] for j in range(n)] for i in range(n)]


@lru_cache(maxsize=None)
def m0_eigen(w1: ExactScalar, w2: ExactScalar, d: int, shift: ExactScalar = ZERO):
    """(P, P^-1, eigenvalues) for M(w1, w2) - shift at q = 0; P has the fixed-point classes as columns."""
    basis = partitions_of(d)
    n = len(basis)
    fp = fixed_point_classes(d, w1, w2)
    P = [[fp[basis[j]][i] for j in range(n)] for i in range(n)]
    Pi_cols = [solve_linear(P, [ONE if i == k else ZERO for i in range(n)]) for k in range(n)]
    Pi = [[Pi_cols[j][i] for j in range(n)] for i in range(n)]
    ev = [m0_eigenvalue(lam, w1, w2) - shift for lam in basis]
    return P, Pi, ev


def _check_eigen(A0, eig) -> None:
    P, _, ev = eig
    n = len(A0)
    AP = _matmul(A0, P)
    if any(AP[i][j] != P[i][j] * ev[j] for i in range(n) for j in range(n)):
        raise CappingError("supplied eigenbasis does not diagonalize the q^0 operator")


@dataclass
class CappedEdgeOperator:
    ab: tuple[int, int]
    blocks: GradedOperator  # QSeries entries
    weights: tuple = (T1, T2, T3)

    def series(self, lam: Partition, mu: Partition) -> QSeries:
        return self.blocks.entry(lam, mu)


def _solve_block(L, R, O0, t3: ExactScalar, order: int, d: int, pinned: Callable | None = None,
                 eig=None) -> list:
    """Order-by-order solve; at resonant orders (singular Sylvester map) the
    block is taken from `pinned(m)` and must satisfy that order's equation."""
    n = len(O0)
    if eig is not None:
        _check_eigen(L[0], eig[0])
        _check_eigen(R[0], eig[1])
    lhs0 = [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(_matmul(O0, R[0]), _matmul(L[0], O0))]
    if any(x for row in lhs0 for x in row):
        raise SingularRecursion(f"grade {d}: seed does not satisfy the q^0 equation")
    terms = [O0]
    for m in range(1, order + 1):
        rhs = [[ZERO] * n for _ in range(n)]
        for k in range(1, m + 1):
            X = _matmul(L[k], terms[m - k])
            Y = _matmul(terms[m - k], R[k])
            rhs = [[rhs[i][j] + X[i][j] - Y[i][j] for j in range(n)] for i in range(n)]
        try:
            terms.append(_sylvester(L[0], R[0], t3 * m, rhs, eig))
        except SingularRecursion:
            if pinned is None:
                raise
            X = pinned(m)
            lhs = [[t3 * m * X[i][j] for j in range(n)] for i in range(n)]
            A, B = _matmul(L[0], X), _matmul(X, R[0])
            if any(lhs[i][j] - A[i][j] + B[i][j] != rhs[i][j] for i in range(n) for j in range(n)):
                raise InconsistentSystem(f"grade {d}: pinned block at q^{m} violates the ODE")
            terms.append(X)
    _check_edge_residual(L, R, terms, t3, d)
    return terms


def solve_edge_ode(M_left: GradedOperator, M_right: GradedOperator, seed: GradedOperator,
                   t3: ExactScalar, order: int, ab: tuple[int, int] = (0, 0),
                   weights=(T1, T2, T3), eigen: Callable | None = None) -> CappedEdgeOperator:
    """Solve -t3 q O' = -M_left O + O M_right order by order from O(0) = seed.

    Entries of M_left/M_right may be rational in q or q-series.  The residual
    of the equation is recomputed through `order` and must vanish.  eigen(d),
    if given, returns q^0 eigen-data for both sides (see _sylvester).
    """
    t3 = scalar(t3)
    out = {}
    max_grade = min(M_left.max_grade, M_right.max_grade, seed.max_grade)
    for d in range(max_grade + 1):
        L = _coefficient_matrices(M_left.blocks[d], order)
        R = _coefficient_matrices(M_right.blocks[d], order)
        O0 = [[scalar(x) for x in row] for row in seed.blocks[d]]
        terms = _solve_block(L, R, O0, t3, order, d, eig=eigen(d) if eigen and d else None)
        n = len(O0)
        out[d] = [[QSeries.from_q_dict({m: terms[m][i][j] for m in range(order + 1)}, order) for j in range(n)]
                  for i in range(n)]
    return CappedEdgeOperator(ab, GradedOperator(out, max_grade), weights)


def _check_edge_residual(L, R, terms, t3, d):
    n = len(terms[0])
    for m in range(len(terms)):
        res = [[-t3 * m * terms[m][i][j] for j in range(n)] for i in range(n)]
        for k in range(m + 1):
            X = _matmul(L[k], terms[m - k])
            Y = _matmul(terms[m - k], R[k])
            res = [[res[i][j] + X[i][j] - Y[i][j] for j in range(n)] for i in range(n)]
        if any(x for row in res for x in row):
            raise SingularRecursion(f"grade {d}: nonzero residual at q^{m}")


def edge_ode_residual(op: CappedEdgeOperator, M_left: GradedOperator, M_right: GradedOperator,
                      t3: ExactScalar, order: int) -> list[tuple[int, int]]:
    """(grade, q-power) positions where -t3 q O' + M_left O - O M_right fails to vanish."""
    bad = []
    t3 = scalar(t3)
    for d in range(op.blocks.max_grade + 1):
        L = _coefficient_matrices(M_left.blocks[d], order)
        R = _coefficient_matrices(M_right.blocks[d], order)
        O = _coefficient_matrices(op.blocks.blocks[d], order)
        n = len(O[0])
        for m in range(order + 1):
            res = [[-t3 * m * O[m][i][j] for j in range(n)] for i in range(n)]
            for k in range(m + 1):
                X = _matmul(L[k], O[m - k])
                Y = _matmul(O[m - k], R[k])
                res = [[res[i][j] + X[i][j] - Y[i][j] for j in range(n)] for i in range(n)]
            if any(x for row in res for x in row):
                bad.append((d, m))
    return bad


# ---------------------------------------------------------------------------
# rubber caps


def m_operator_at_zero(w1, w2, max_grade: int) -> GradedOperator:
    return GradedOperator({d: [[x.substitute(qh=0) for x in row] for row in m_block(w1, w2, d)]
                           for d in range(max_grade + 1)}, max_grade)


@lru_cache(maxsize=None)
def rubber_operator(w1: ExactScalar, w2: ExactScalar, c: ExactScalar, max_grade: int, order: int) -> GradedOperator:
    """S(q) with c q S' = S M(w1, w2) - M0 S, S(0) = Id."""
    M = GradedOperator({d: m_block(w1, w2, d) for d in range(max_grade + 1)}, max_grade)
    M0 = m_operator_at_zero(w1, w2, max_grade)
    def eigen(d):
        e = m0_eigen(w1, w2, d)
        return e, e
    return solve_edge_ode(M0, M, GradedOperator.identity(max_grade), -c, order, eigen=eigen).blocks


@lru_cache(maxsize=None)
def fixed_point_restriction(d: int, w1: ExactScalar, w2: ExactScalar) -> list[list[ExactScalar]]:
    """Res[alpha][kappa] = <[alpha], |kappa>>, the restriction of |kappa> to the fixed point alpha."""
    basis = partitions_of(d)
    fp = fixed_point_classes(d, w1, w2)
    g = [pairing_c2(b, b, w1, w2) for b in basis]
    return [[fp[a][k] * g[k] for k in range(len(basis))] for a in basis]


def cap_matrix(w1: ExactScalar, w2: ExactScalar, c: ExactScalar, d: int, order: int) -> list[list[QSeries]]:
    """cap[alpha][lam] = sum_kappa Res[alpha][kappa] S_{kappa lam} / e(T_alpha)."""
    basis = partitions_of(d)
    S = rubber_operator(w1, w2, c, d, order).blocks[d]
    Res = fixed_point_restriction(d, w1, w2)
    out = []
    for ai, a in enumerate(basis):
        e = tangent_euler(a, w1, w2)
        row = []
        for li in range(len(basis)):
            acc = _zero(2 * order)
            for k in range(len(basis)):
                if Res[ai][k]:
                    acc = acc + S[k][li] * (Res[ai][k] / e)
            row.append(acc)
        out.append(row)
    return out


def _frame_weights(frame) -> tuple[ExactScalar, ExactScalar, ExactScalar]:
    return tuple(linear_form(r) for r in frame)


def leg_cap(axis: int, d: int, frame=vx.STANDARD_WEIGHTS, order: int = 4) -> list[list[QSeries]]:
    t = _frame_weights(frame)
    p, r = LEG_FRAME[axis]
    return cap_matrix(t[p], t[r], -t[axis], d, order)


def degree0_closed_form(frame=vx.STANDARD_WEIGHTS, order: int = 4) -> QSeries:
    """M(-q)^{-(t1+t2)(t1+t3)(t2+t3)/(t1 t2 t3)} in the given frame."""
    t = _frame_weights(frame)
    c = -(t[0] + t[1]) * (t[0] + t[2]) * (t[1] + t[2]) / (t[0] * t[1] * t[2])
    return macmahon_power(c, order)


def reduced_vertex_series(legs: Triple, frame=vx.STANDARD_WEIGHTS, cutoff: int = 4) -> QSeries:
    """Box-counting vertex divided by its degree-zero part."""
    W = vx.dt_vertex_series(legs, frame, cutoff)
    return W * degree0_closed_form(frame, cutoff - min(0, minimal_volume(legs))).inverse()


def capped_vertex_series(legs: Triple, cutoff: int, frame=vx.STANDARD_WEIGHTS) -> QSeries:
    """Starred capped vertex C*(legs) as a q-series known through q^cutoff."""
    legs = tuple(legs)
    sizes = [l.size for l in legs]
    choices = [partitions_of(s) for s in sizes]
    lows = {al: minimal_volume(al) for al in itertools.product(*choices)}
    low = min(lows.values())
    vcut = cutoff
    cap_order = cutoff - low
    caps = [leg_cap(ax, s, frame, cap_order) if s else None for ax, s in enumerate(sizes)]
    idx = [{lam: i for i, lam in enumerate(partitions_of(s))} for s in sizes]
    total = None
    for al in itertools.product(*choices):
        W = reduced_vertex_series(al, frame, vcut)
        for ax in range(3):
            if sizes[ax]:
                W = W * caps[ax][idx[ax][al[ax]]][idx[ax][legs[ax]]]
        total = W if total is None else total + W
    return total.truncate(2 * cutoff)


def capped_vertex(legs: Triple, frame=vx.STANDARD_WEIGHTS, span: int | None = None, den_deg: int = 0,
                  extra: int = 2) -> ExactScalar:
    """Exact C*(legs) by rational reconstruction with `extra` verified coefficients.

    C* starts at q^{-n} (n the total leg size); its numerator is assumed to
    stop at q^{span-n} (default span 2n).
    """
    n = sum(l.size for l in legs)
    span = 2 * n if span is None else span
    cutoff = span - n + den_deg + extra
    s = capped_vertex_series(legs, cutoff, frame)
    v = s.valuation()
    if v is None:
        return ZERO
    if v < -2 * n:
        raise InconsistentSystem(f"capped vertex has valuation q^{v / 2} below q^-{n}")
    try:
        return rational_reconstruct(s, span - n - min(v // 2, 0), den_deg)
    except (NoFit, AmbiguousFit) as exc:
        raise InconsistentSystem(f"capped vertex {tuple(str(l) for l in legs)}: {exc}") from exc


def capped_edge(lam: Partition, mu: Partition, a: int, b: int, frame=vx.STANDARD_WEIGHTS,
                order: int = 4) -> QSeries:
    """Unstarred capped edge E(lam, mu) for O(a)+O(b) with 0-end frame `frame`."""
    if lam.size != mu.size:
        return _zero(2 * order)
    d = lam.size
    if d == 0:
        return QSeries.one(order)
    t = _frame_weights(frame)
    t1p, t2p, t3p = t[0] - a * t[2], t[1] - b * t[2], -t[2]
    basis = partitions_of(d)
    cap0 = cap_matrix(t[0], t[1], t[2], d, order)
    cap1 = cap_matrix(t1p, t2p, t3p, d, order)
    li, mi = basis.index(lam), basis.index(mu)
    total = _zero(2 * order)
    for ai, al in enumerate(basis):
        w, chi = vx.edge_weight_dt(al, a, b, frame)
        e0 = tangent_euler(al, t[0], t[1])
        e1 = tangent_euler(al, t1p, t2p)
        total = total + (cap0[ai][li] * cap1[ai][mi] * (w * e0 * e1)).shift(2 * chi)
    return total.truncate(2 * order)


def starred_edge(lam: Partition, mu: Partition, a: int, b: int, frame=vx.STANDARD_WEIGHTS, order: int = 4) -> QSeries:
    """E* = q^{-d(a+b+2)/2} E."""
    return capped_edge(lam, mu, a, b, frame, order + 2).shift(-lam.size * (a + b + 2)).truncate(2 * order)


def raise_index(d: int, lowered: Mapping[Partition, ExactScalar], w1=T1, w2=T2, sign: bool = True) -> dict:
    """X^lam = sum_mu X_mu (-1)^d g^{mu lam} (sign optional)."""
    out = {}
    for lam in partitions_of(d):
        gi = pairing_c2(lam, lam, w1, w2).inverse()
        v = scalar(lowered.get(lam, ZERO)) * gi
        out[lam] = -v if (sign and d % 2) else v
    return out


def raised_starred_edge(a: int, b: int, d: int, frame=vx.STANDARD_WEIGHTS, order: int = 4) -> list[list[QSeries]]:
    """g^{-1}(t1, t2) E*(a, b) on grade d (left index raised, no sign)."""
    t = _frame_weights(frame)
    basis = partitions_of(d)
    shift = d * (a + b + 2)
    out = []
    for lam in basis:
        gi = pairing_c2(lam, lam, t[0], t[1]).inverse()
        out.append([(capped_edge(lam, mu, a, b, frame, order + d * (abs(a) + abs(b) + 2)).shift(-shift) * gi)
                    .truncate(2 * order) for mu in basis])
    return out


def edge_operator_from_ode(a: int, b: int, max_grade: int, order: int,
                           frame=vx.STANDARD_WEIGHTS) -> CappedEdgeOperator:
    """Raised starred (a, b) capped edge from  -t3 q O' = -M(t1, t2) O + O M(t1', t2').

    Only the lowest q-order block is taken from the localization sum; the
    rest follows from the ODE.  With O = q^{s/2} F the equation for F has
    M(t1, t2) shifted by -t3 s / 2.
    """
    t = _frame_weights(frame)
    t1p, t2p = t[0] - a * t[2], t[1] - b * t[2]
    out = {}
    for d in range(max_grade + 1):
        basis = partitions_of(d)
        n = len(basis)
        if d == 0:
            out[0] = [[QSeries.one(order)]]
            continue
        low = raised_starred_edge(a, b, d, frame, d * (abs(a) + abs(b) + 1) + 1)
        s = min(x.valuation() for row in low for x in row if x.valuation() is not None)
        O0 = [[x.coeff_half(s) for x in row] for row in low]
        ML = m_block(t[0], t[1], d)
        shift = t[2] * Fraction(s, 2)
        ML = [[x - shift if i == j else x for j, x in enumerate(row)] for i, row in enumerate(ML)]
        L = _coefficient_matrices(ML, order)
        R = _coefficient_matrices(m_block(t1p, t2p, d), order)
        direct = {}

        def pinned(m, d=d, s=s):
            if "E" not in direct:
                direct["E"] = raised_starred_edge(a, b, d, frame, order + (s + 1) // 2 + 1)
            return [[x.coeff_half(s + 2 * m) for x in row] for row in direct["E"]]

        eig = (m0_eigen(t[0], t[1], d, shift), m0_eigen(t1p, t2p, d))
        terms = _solve_block(L, R, O0, t[2], order, d, pinned, eig)
        out[d] = [[QSeries.from_q_dict({m: terms[m][i][j] for m in range(order + 1)}, order).shift(s)
                   .truncate(2 * order) for j in range(n)] for i in range(n)]
    return CappedEdgeOperator((a, b), GradedOperator(out, max_grade), t)


def tube_matrix(d: int, frame=vx.STANDARD_WEIGHTS, order: int = 3) -> list[list[QSeries]]:
    """(-q)^{-d} E(0, 0) with the first index raised by (-1)^d g^{-1}: the identity."""
    t = _frame_weights(frame)
    basis = partitions_of(d)
    out = []
    for lam in basis:
        gi = pairing_c2(lam, lam, t[0], t[1]).inverse()
        out.append([(capped_edge(lam, mu, 0, 0, frame, order + d).shift(-2 * d) * gi).truncate(2 * order)
                    for mu in basis])
    return out


def cap_vector(d: int, frame=vx.STANDARD_WEIGHTS, order: int = 3) -> dict:
    """(-q)^{-d} times the unstarred cap, index raised by (-1)^d g^{-1}; equals delta at 1^d.

    The cap along axis 3 is the 1-leg capped vertex, C = q^d C*.
    """
    t = _frame_weights(frame)
    out = {}
    for lam in partitions_of(d):
        legs = (EMPTY, EMPTY, lam)
        gi = pairing_c2(lam, lam, t[0], t[1]).inverse()
        out[lam] = capped_vertex_series(legs, order, frame) * gi
    return out


def polytope_capped_data(P, order: int) -> dict:
    """Vertex and edge callables for toric.assemble_capped_dt, as q-series through q^order.

    Vertices enter unstarred (C = q^n C*); edges are evaluated in the frame of
    their first end.
    """
    def vertex(v, legs):
        n = sum(l.size for l in legs)
        return capped_vertex_series(legs, order + n, P.vertices[v]).shift(2 * n).truncate(2 * order)

    def edge(e, l0, l1):
        fr = P.vertices[e.ends[0]]
        m = e.axis_map[0]
        return capped_edge(l0, l1, e.ab[0], e.ab[1], (fr[m[0]], fr[m[1]], fr[m[2]]), order + 2)

    return {"vertex": vertex, "edge": edge}


# ---------------------------------------------------------------------------
# tables, connected parts, R


@dataclass
class CappedVertexTable:
    entries: dict = field(default_factory=dict)
    weights: tuple = (T1, T2, T3)

    def __getitem__(self, key) -> ExactScalar:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    def serialize(self) -> str:
        lines = []
        for (l, m, n) in sorted(self.entries, key=lambda k: (sum(p.size for p in k), k)):
            lines.append(f"{l} {m} {n}: {self.entries[(l, m, n)].serialize()}")
        return "\n".join(lines)


def _monomial(triple: Triple) -> tuple:
    return tuple(sorted((leg, part) for leg, lam in enumerate(triple) for part in lam.parts))


def _triple(mono: tuple) -> Triple:
    parts = [[], [], []]
    for leg, p in mono:
        parts[leg].append(p)
    return tuple(Partition(tuple(sorted(x, reverse=True))) for x in parts)


def _sub_multisets(mono: tuple) -> list[tuple]:
    c = Counter(mono)
    keys = sorted(c)
    out = []
    for counts in itertools.product(*[range(c[k] + 1) for k in keys]):
        sub = []
        for k, m in zip(keys, counts):
            sub.extend([k] * m)
        out.append(tuple(sub))
    return out


def _minus(a: tuple, b: tuple) -> tuple:
    c = Counter(a)
    c.subtract(b)
    return tuple(sorted(c.elements()))


def _series_mul(A: dict, B: dict, keep: set) -> dict:
    out: dict = {}
    for ka, va in A.items():
        for kb, vb in B.items():
            k = tuple(sorted(ka + kb))
            if k in keep:
                out[k] = out.get(k, ZERO) + va * vb
    return out


def connected_part(table: CappedVertexTable) -> CappedVertexTable:
    """Formal logarithm in the variables x_k, y_k, z_k with x^lam = prod x_{lam_i}."""
    keep = {_monomial(k) for k in table.entries}
    for mono in keep:
        for sub in _sub_multisets(mono):
            if sub not in keep:
                raise MissingSubTriple(f"{_triple(sub)} needed for {_triple(mono)}")
    if () in keep and table.entries[(EMPTY, EMPTY, EMPTY)] != ONE:
        raise CappingError("the empty-leg entry must be 1")
    F = {_monomial(k): scalar(v) for k, v in table.entries.items() if k != (EMPTY, EMPTY, EMPTY)}
    out = {}
    power = dict(F)
    k = 1
    while power:
        for m, v in power.items():
            out[m] = out.get(m, ZERO) + v * Fraction((-1) ** (k + 1), k)
        power = _series_mul(power, F, keep)
        k += 1
    res = {_triple(m): v for m, v in out.items()}
    res[(EMPTY, EMPTY, EMPTY)] = ZERO
    return CappedVertexTable(res, table.weights)


def disconnected_from_connected(conn: CappedVertexTable) -> CappedVertexTable:
    """exp of the connected generating function (inverse of connected_part)."""
    keep = {_monomial(k) for k in conn.entries}
    F = {_monomial(k): scalar(v) for k, v in conn.entries.items() if k != (EMPTY, EMPTY, EMPTY) and v}
    out = {(): ONE}
    power = {(): ONE}
    k = 1
    fact = 1
    while True:
        power = _series_mul(power, F, keep)
        if not power:
            break
        fact *= k
        for m, v in power.items():
            out[m] = out.get(m, ZERO) + v / fact
        k += 1
    res = {_triple(m): out.get(m, ZERO) for m in keep}
    res[(EMPTY, EMPTY, EMPTY)] = ONE
    return CappedVertexTable(res, conn.weights)


def pi_factor(lam: Partition) -> ExactScalar:
    out = ONE
    for p in lam.parts:
        out = out * (1 - (-Q) ** p)
    return out / centralizer_order(lam)


def p_factor(lam: Partition, mu: Partition, nu: Partition, weights=(T1, T2, T3)) -> ExactScalar:
    t1, t2, t3 = (scalar(w) for w in weights)
    out = t1 ** (mu.length + nu.length) * t2 ** (lam.length + nu.length) * t3 ** (lam.length + mu.length)
    for i in range(1, mu.size + 1):
        for j in range(1, lam.size + 1):
            out = out * (i * t1 + j * t2)
    for j in range(1, nu.size + 1):
        for k in range(1, mu.size + 1):
            out = out * (j * t2 + k * t3)
    for i in range(1, nu.size + 1):
        for k in range(1, lam.size + 1):
            out = out * (i * t1 + k * t3)
    return out


def r_normalize(c_conn: ExactScalar, lam: Partition, mu: Partition, nu: Partition,
                weights=(T1, T2, T3), symmetric: bool = False) -> ExactScalar:
    """R = C° P / (q^e (1+q)^{|lam|+|mu|+|nu|-2} Pi_lam Pi_mu Pi_nu).

    e = 1-|lam|-|mu|+|nu| as printed, or 1-|lam|-|mu|-|nu| with `symmetric`;
    they agree when nu is empty.
    """
    e = 1 - lam.size - mu.size + (-nu.size if symmetric else nu.size)
    n = lam.size + mu.size + nu.size
    den = Q ** e * (1 + Q) ** (n - 2) * pi_factor(lam) * pi_factor(mu) * pi_factor(nu)
    return scalar(c_conn) * p_factor(lam, mu, nu, weights) / den


# ---------------------------------------------------------------------------
# solvers


def _all_subtriples(triples) -> list[Triple]:
    out = set()
    for tr in triples:
        for sub in _sub_multisets(_monomial(tr)):
            out.add(_triple(sub))
    return sorted(out, key=lambda k: (sum(p.size for p in k), k))


def compute_table(triples: Sequence[Triple], known: CappedVertexTable | None = None,
                  top: Callable[[Triple], int] | None = None) -> CappedVertexTable:
    """C* for the given triples and all their sub-triples."""
    table = CappedVertexTable(dict(known.entries) if known else {})
    for tr in _all_subtriples(triples):
        if tr in table:
            continue
        if tr == (EMPTY, EMPTY, EMPTY):
            table.entries[tr] = ONE
            continue
        table.entries[tr] = capped_vertex(tr, span=top(tr) if top else None)
    return table


def solve_two_leg(known: CappedVertexTable | None, n: int, max_other: int) -> CappedVertexTable:
    """Entries C*(lam, mu, empty) with min(|lam|, |mu|) = n and the other leg of size <= max_other.

    Each entry is a rational reconstruction verified on extra coefficients;
    entries already in `known` are recomputed and must agree.
    """
    wanted = []
    for a in range(n, max_other + 1):
        for lam in partitions_of(n):
            for mu in partitions_of(a):
                wanted.append((lam, mu, EMPTY))
                wanted.append((mu, lam, EMPTY))
    fresh = compute_table(wanted)
    if known:
        for k, v in known.entries.items():
            if k in fresh and fresh[k] != v:
                raise InconsistentSystem(f"entry {k} disagrees with the supplied table")
    return fresh


def solve_three_leg(two_leg: CappedVertexTable | None, triples: Sequence[Triple]) -> CappedVertexTable:
    """Three-leg entries; S(3)-symmetry of computed permutations is asserted."""
    table = compute_table(triples, two_leg)
    check_s3(table)
    return table


PERMS = list(itertools.permutations(range(3)))


def permute_scalar(f: ExactScalar, perm) -> ExactScalar:
    """Rename t_i -> t_{perm[i]}."""
    names = ("t1", "t2", "t3")
    tmp = {names[i]: linear_form([1 if j == perm[i] else 0 for j in range(3)]) for i in range(3)}
    return scalar(f).substitute(**tmp)


def check_s3(table: CappedVertexTable) -> list:
    """Pairs of entries related by a leg/weight permutation that disagree (C itself is symmetric)."""
    bad = []
    for key, val in table.entries.items():
        for perm in PERMS:
            new = [None] * 3
            for i in range(3):
                new[perm[i]] = key[i]
            nk = tuple(new)
            if nk in table.entries and permute_scalar(val, perm) != table.entries[nk]:
                bad.append((key, nk))
    if bad:
        raise InconsistentSystem(f"S(3) symmetry fails for {bad[:3]}")
    return bad


# ---------------------------------------------------------------------------
# external operator data and capped rubber


@dataclass
class ExternalOperatorData:
    """Divisor operators O(Gamma_F) per divisor, grade and Novikov order.

    blocks[(divisor, grade, sigma)] is a constant matrix; pairing[divisor]
    gives Gamma . sigma as a vector dotted with sigma.
    """

    tag: str
    grade_bound: int
    novikov_bound: int
    pairing: dict
    blocks: dict

    @classmethod
    def load(cls, path: str | Path) -> "ExternalOperatorData":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise MissingExternalData(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data) -> "ExternalOperatorData":
        blocks = {}
        for b in data.get("blocks", []):
            key = (b["divisor"], int(b["grade"]), tuple(int(x) for x in b["order"]))
            blocks[key] = [[ExactScalar.parse(x) for x in row] for row in b["matrix"]]
        pairing = {k: tuple(int(x) for x in v) for k, v in data["pairing"].items()}
        return cls(data["tag"], int(data["grade_bound"]), int(data["novikov_bound"]), pairing, blocks)

    def to_dict(self) -> dict:
        blocks = []
        for (div, g, s) in sorted(self.blocks):
            blocks.append({"divisor": div, "grade": g, "order": list(s),
                           "matrix": [[x.serialize() for x in row] for row in self.blocks[(div, g, s)]]})
        return {"tag": self.tag, "grade_bound": self.grade_bound, "novikov_bound": self.novikov_bound,
                "pairing": {k: list(v) for k, v in self.pairing.items()}, "blocks": blocks}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def block(self, div: str, grade: int, sigma: tuple) -> list:
        key = (div, grade, tuple(sigma))
        if key in self.blocks:
            return self.blocks[key]
        if any(sigma) and grade <= self.grade_bound and max(sigma) <= self.novikov_bound:
            n = len(partitions_of(grade))
            return [[ZERO] * n for _ in range(n)]
        if not any(sigma):
            raise MissingExternalData(f"{self.tag}: no order-0 block for {div} at grade {grade}")
        raise MissingExternalData(f"{self.tag}: {div} grade {grade} order {sigma} outside supplied bounds")


def _effective_below(sigma: tuple) -> list[tuple]:
    return [s for s in itertools.product(*[range(x + 1) for x in sigma]) if s != sigma]


def capped_rubber_reconstruct(ext: ExternalOperatorData, sigma_max: int, grade: int,
                              t3: ExactScalar = T3) -> dict:
    """O_sigma for all sigma <= sigma_max from

        t3 (Gamma . sigma) O_sigma = [O(Gamma)_0, O_sigma] + sum_{s < sigma} O(Gamma)_{sigma - s} O_s,

    with O_0 = Id, using for each sigma a divisor with Gamma . sigma != 0.
    """
    if grade > ext.grade_bound or sigma_max > ext.novikov_bound:
        raise MissingExternalData(f"requested grade {grade}, order {sigma_max} beyond supplied data")
    rank = len(next(iter(ext.pairing.values())))
    n = len(partitions_of(grade))
    ident = [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]
    out = {(0,) * rank: ident}
    sigmas = sorted((s for s in itertools.product(range(sigma_max + 1), repeat=rank) if any(s)), key=sum)
    for sigma in sigmas:
        div = next((g for g, v in ext.pairing.items() if sum(a * b for a, b in zip(v, sigma))), None)
        if div is None:
            raise SingularRecursion(f"no divisor pairs nontrivially with {sigma}")
        dot = sum(a * b for a, b in zip(ext.pairing[div], sigma))
        A0 = ext.block(div, grade, (0,) * rank)
        rhs = [[ZERO] * n for _ in range(n)]
        for s in _effective_below(sigma):
            diff = tuple(a - b for a, b in zip(sigma, s))
            X = _matmul(ext.block(div, grade, diff), out[s])
            rhs = [[rhs[i][j] + X[i][j] for j in range(n)] for i in range(n)]
        # t3 dot X - A0 X + X A0 = rhs
        out[sigma] = _sylvester(A0, A0, scalar(t3) * dot, rhs)
    return out


def rubber_residual(ext: ExternalOperatorData, family: dict, grade: int, t3: ExactScalar = T3) -> list:
    """Positions (divisor, sigma) where the recursion fails for the given family."""
    bad = []
    rank = len(next(iter(ext.pairing.values())))
    for div, vec in ext.pairing.items():
        A0 = ext.block(div, grade, (0,) * rank)
        for sigma, O in family.items():
            if not any(sigma):
                continue
            dot = sum(a * b for a, b in zip(vec, sigma))
            lhs = [[scalar(t3) * dot * x for x in row] for row in O]
            X = _matmul(A0, O)
            Y = _matmul(O, A0)
            res = [[lhs[i][j] - X[i][j] + Y[i][j] for j in range(len(O))] for i in range(len(O))]
            for s in _effective_below(sigma):
                diff = tuple(a - b for a, b in zip(sigma, s))
                Z = _matmul(ext.block(div, grade, diff), family[s])
                res = [[res[i][j] - Z[i][j] for j in range(len(O))] for i in range(len(O))]
            if any(x for row in res for x in row):
                bad.append((div, sigma))
    return bad
