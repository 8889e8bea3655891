"""Fock space of Hilb(C^2): Nakajima basis, pairing, M(w1, w2), gluing data.

Heisenberg convention: [a_k, a_l] = k delta_{k+l,0} with no equivariant scalar.
The basis vector |mu> is (1/z(mu)) prod a_{-mu_i} |0>.  The equivariant
pairing is the one for which a_k has adjoint (-1)^{k-1} (t1 t2)^{sign k} a_{-k};
with it <mu|nu> = (-1)^{|mu|-l(mu)} delta / (z(mu) (t1 t2)^{l(mu)}).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence

from .exactalg import (
    ExactScalar, QSeries, ONE, ZERO, Q, T1, T2, T3, scalar, series_expand, solve_linear,
)
from .partitions import (
    EMPTY, LabelBasis, Partition, TRIVIAL_LABELS, WeightedPartition, centralizer_order,
    partitions_of, weighted_partitions_of,
)


class SizeMismatch(ValueError):
    code = "SizeMismatch"


def _merge(lam: Partition, k: int) -> Partition:
    return Partition(tuple(sorted(lam.parts + (k,), reverse=True)))


def _remove(lam: Partition, k: int) -> Partition:
    parts = list(lam.parts)
    parts.remove(k)
    return Partition(tuple(parts))


# ---------------------------------------------------------------------------
# vectors


class FockVector:
    """Finite combination of Nakajima basis vectors |mu>."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[WeightedPartition | Partition, ExactScalar] | None = None):
        clean: dict = {}
        for k, v in (terms or {}).items():
            if isinstance(k, Partition):
                k = WeightedPartition.trivial(k)
            v = scalar(v)
            if v:
                clean[k] = clean.get(k, ZERO) + v
        self.terms = {k: v for k, v in clean.items() if v}

    @classmethod
    def basis(cls, lam: Partition) -> "FockVector":
        return cls({lam: ONE})

    @classmethod
    def vacuum(cls) -> "FockVector":
        return cls({EMPTY: ONE})

    def grades(self) -> set[int]:
        return {k.underlying().size for k in self.terms}

    def coefficient(self, lam: Partition) -> ExactScalar:
        return self.terms.get(WeightedPartition.trivial(lam), ZERO)

    def __add__(self, other: "FockVector") -> "FockVector":
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, ZERO) + v
        return FockVector(t)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c) -> "FockVector":
        c = scalar(c)
        return FockVector({k: v * c for k, v in self.terms.items()})

    def __eq__(self, other):
        return isinstance(other, FockVector) and (self - other).terms == {}

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        return "FockVector(" + ", ".join(f"{k}: {v}" for k, v in self.terms.items()) + ")"


def _to_monomials(v: FockVector) -> dict:
    out: dict = {}
    for k, c in v.terms.items():
        if any(l != "1" for _, l in k.parts):
            raise NotImplementedError("only trivially labelled vectors act on C^2")
        lam = k.underlying()
        out[lam] = out.get(lam, ZERO) + c / centralizer_order(lam)
    return out


def _from_monomials(m: dict) -> FockVector:
    return FockVector({lam: c * centralizer_order(lam) for lam, c in m.items()})


def _alpha_mono(k: int, m: dict) -> dict:
    """a_k on the monomial basis prod a_{-mu_i}|0>."""
    out: dict = defaultdict(lambda: ZERO)
    for lam, c in m.items():
        if k < 0:
            out[_merge(lam, -k)] = out[_merge(lam, -k)] + c
        else:
            mult = lam.parts.count(k)
            if mult:
                key = _remove(lam, k)
                out[key] = out[key] + c * (k * mult)
    return {a: b for a, b in out.items() if b}


def alpha_apply(k: int, v: FockVector) -> FockVector:
    if k == 0:
        raise ValueError("a_0 is not used")
    return _from_monomials(_alpha_mono(k, _to_monomials(v)))


def commutator_scalar(k: int) -> int:
    """[a_k, a_{-k}] on the vacuum."""
    vac = FockVector.vacuum()
    lhs = alpha_apply(k, alpha_apply(-k, vac)) - alpha_apply(-k, alpha_apply(k, vac))
    return int(lhs.coefficient(EMPTY).constant_value())


def pairing_c2(lam: Partition, mu: Partition, t1=T1, t2=T2) -> ExactScalar:
    if lam.size != mu.size:
        raise SizeMismatch(f"|{lam}| != |{mu}|")
    if lam != mu:
        return ZERO
    sign = -1 if (lam.size - lam.length) % 2 else 1
    return scalar(Fraction(sign, centralizer_order(lam))) / (t1 * t2) ** lam.length


def pairing_from_alphas(lam: Partition, mu: Partition, t1=T1, t2=T2) -> ExactScalar:
    """<lam|mu> computed by moving the adjoint operators across (test oracle)."""
    if lam.size != mu.size:
        raise SizeMismatch(f"|{lam}| != |{mu}|")
    # <0| prod (a_{-l_i})^* = <0| prod (-1)^{l_i - 1} (t1 t2)^{-1} a_{l_i}
    coeff = ONE / centralizer_order(lam)
    m = {mu: ONE / centralizer_order(mu)}
    for part in lam.parts:
        coeff = coeff * (-1) ** (part - 1) / (t1 * t2)
        m = _alpha_mono(part, m)
    return coeff * m.get(EMPTY, ZERO)


# ---------------------------------------------------------------------------
# graded operators


@dataclass
class GradedOperator:
    """Energy-preserving operator: blocks[d] is a square matrix in partitions_of(d) order.

    Matrix convention: blocks[d][i][j] is the coefficient of basis i in the image of basis j.
    """

    blocks: dict
    max_grade: int

    def basis(self, d: int) -> tuple[Partition, ...]:
        return partitions_of(d)

    def entry(self, lam: Partition, mu: Partition):
        if lam.size != mu.size:
            return ZERO
        b = self.basis(lam.size)
        return self.blocks[lam.size][b.index(lam)][b.index(mu)]

    def compose(self, other: "GradedOperator") -> "GradedOperator":
        out = {}
        for d in range(min(self.max_grade, other.max_grade) + 1):
            out[d] = matmul(self.blocks[d], other.blocks[d])
        return GradedOperator(out, min(self.max_grade, other.max_grade))

    def map_entries(self, fn: Callable) -> "GradedOperator":
        return GradedOperator({d: [[fn(x) for x in row] for row in B] for d, B in self.blocks.items()},
                              self.max_grade)

    @classmethod
    def identity(cls, max_grade: int) -> "GradedOperator":
        return cls({d: identity_matrix(len(partitions_of(d))) for d in range(max_grade + 1)}, max_grade)

    def apply(self, v: FockVector) -> FockVector:
        out = FockVector()
        for k, c in v.terms.items():
            lam = k.underlying()
            d = lam.size
            b = self.basis(d)
            j = b.index(lam)
            out = out + FockVector({b[i]: self.blocks[d][i][j] * c for i in range(len(b))})
        return out

    def serialize(self) -> str:
        lines = []
        for d in sorted(self.blocks):
            basis = " ".join(str(p) for p in self.basis(d))
            lines.append(f"grade {d} basis {basis}")
            for row in self.blocks[d]:
                lines.append("  " + " | ".join(x.serialize() for x in row))
        return "\n".join(lines)


def identity_matrix(n: int):
    return [[ONE if i == j else ZERO for j in range(n)] for i in range(n)]


def matmul(A, B):
    n, m, p = len(A), len(B), len(B[0]) if B else 0
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            acc = None
            for k in range(m):
                a, b = A[i][k], B[k][j]
                if _nonzero(a) and _nonzero(b):
                    term = a * b
                    acc = term if acc is None else acc + term
            row.append(acc if acc is not None else _zero_like(A[i][0] if m else ZERO))
        out.append(row)
    return out


def _nonzero(x) -> bool:
    if isinstance(x, QSeries):
        return x.valuation() is not None
    return bool(x)


def _zero_like(x):
    if isinstance(x, QSeries):
        return QSeries(0, [], x.truncation_order) if x.truncation_order >= 0 else QSeries(x.truncation_order, [], x.truncation_order)
    return ZERO


# ---------------------------------------------------------------------------
# the operator M(w1, w2)


def _mono_block(op: Callable[[dict], dict], d: int) -> list[list[ExactScalar]]:
    """Matrix of an operator given on monomials, in the |mu> basis."""
    basis = partitions_of(d)
    cols = []
    for mu in basis:
        img = _from_monomials(op({mu: ONE / centralizer_order(mu)}))
        cols.append([img.coefficient(lam) for lam in basis])
    return [[cols[j][i] for j in range(len(basis))] for i in range(len(basis))]


def _energy_coefficient(k: int) -> ExactScalar:
    """(k/2) ((-q)^k + 1)/((-q)^k - 1)."""
    x = (-Q) ** k
    return scalar(Fraction(k, 2)) * (x + 1) / (x - 1)


def m_block(w1: ExactScalar, w2: ExactScalar, d: int) -> list[list[ExactScalar]]:
    w1, w2 = scalar(w1), scalar(w2)

    def op(m: dict) -> dict:
        acc: dict = defaultdict(lambda: ZERO)
        for k in range(1, d + 1):
            img = _alpha_mono(-k, _alpha_mono(k, m))
            c = (w1 + w2) * _energy_coefficient(k)
            for lam, v in img.items():
                acc[lam] = acc[lam] + c * v
        for k in range(1, d + 1):
            for l in range(1, d + 1):
                if k + l <= d:
                    # w1 w2 a_{k+l} a_{-k} a_{-l}: lowers then raises, grade-neutral overall
                    img = _alpha_mono(k + l, _alpha_mono(-k, _alpha_mono(-l, m)))
                    for lam, v in img.items():
                        acc[lam] = acc[lam] + w1 * w2 * v / 2
                    img = _alpha_mono(-(k + l), _alpha_mono(k, _alpha_mono(l, m)))
                    for lam, v in img.items():
                        acc[lam] = acc[lam] - v / 2
        return {a: b for a, b in acc.items() if b}

    return _mono_block(op, d)


def m_operator(w1, w2, max_grade: int, q_order: int | None = None) -> GradedOperator:
    """M(w1, w2) blockwise with rational-in-q entries (q_order unused for exact blocks)."""
    return GradedOperator({d: m_block(w1, w2, d) for d in range(max_grade + 1)}, max_grade)


def m_operator_normal_ordered(w1, w2, d: int) -> list[list[ExactScalar]]:
    """Independent evaluator: builds M from its matrix elements via explicit normal ordering.

    Uses <lam| ... |mu> computed from the action of each product of three
    operators on basis monomials written as ordered lists of creation indices.
    """
    w1, w2 = scalar(w1), scalar(w2)
    basis = partitions_of(d)

    def apply_word(word: list[int], state: tuple[int, ...]) -> dict:
        # state: multiset of creation modes (sorted tuple); word applied right-to-left
        cur = {state: Fraction(1)}
        for k in reversed(word):
            nxt: dict = defaultdict(Fraction)
            for st, c in cur.items():
                if k < 0:
                    nxt[tuple(sorted(st + (-k,), reverse=True))] += c
                else:
                    mult = st.count(k)
                    if mult:
                        lst = list(st)
                        lst.remove(k)
                        nxt[tuple(lst)] += c * k * mult
            cur = {a: b for a, b in nxt.items() if b}
        return cur

    cols = []
    for mu in basis:
        res: dict = defaultdict(lambda: ZERO)
        start = mu.parts
        norm = Fraction(1, centralizer_order(mu))
        for k in range(1, d + 1):
            for st, c in apply_word([-k, k], start).items():
                res[st] = res[st] + (w1 + w2) * _energy_coefficient(k) * c * norm
            for l in range(1, d + 1):
                for st, c in apply_word([k + l, -k, -l], start).items():
                    res[st] = res[st] + w1 * w2 * c * norm / 2
                for st, c in apply_word([-(k + l), k, l], start).items():
                    res[st] = res[st] - c * norm / 2
        cols.append([res.get(lam.parts, ZERO) * centralizer_order(lam) for lam in basis])
    return [[cols[j][i] for j in range(len(basis))] for i in range(len(basis))]


def m0_eigenvalue(lam: Partition, w1, w2) -> ExactScalar:
    """Eigenvalue of M at q = 0 on the fixed-point class of lam."""
    w1, w2 = scalar(w1), scalar(w2)
    acc = ZERO
    for i, j in lam.cells():
        acc = acc - (w1 * i + w2 * j)
    return acc - (w1 + w2) * Fraction(lam.size, 2)


# ---------------------------------------------------------------------------
# Phi(q) and the sigma_1(F) tube operator


def _macmahon_log_coeffs(order: int) -> list[Fraction]:
    """Coefficients of log M(x) = sum_m sigma_2(m)/m x^m."""
    out = [Fraction(0)] * (order + 1)
    for m in range(1, order + 1):
        out[m] = Fraction(sum(d * d for d in range(1, m + 1) if m % d == 0), m)
    return out


def macmahon_power(c: ExactScalar, order: int, sign: int = -1) -> QSeries:
    """M(sign*q)^c as a q-series through q^order."""
    L = _macmahon_log_coeffs(order)
    c = scalar(c)
    logc = [ZERO] + [c * (L[m] * sign**m) for m in range(1, order + 1)]
    E = [ONE] + [ZERO] * order
    for n in range(1, order + 1):
        acc = ZERO
        for k in range(1, n + 1):
            if logc[k]:
                acc = acc + logc[k] * k * E[n - k]
        E[n] = acc / n
    return QSeries.from_q_dict(dict(enumerate(E)), order)


def phi_series(order: int, literal: bool = False) -> QSeries:
    """q d/dq log M(-q) (default) or q d/dq M(-q) when literal."""
    if literal:
        M = macmahon_power(ONE, order)
        coeffs = {n: M.coeff(n) * n for n in range(order + 1)}
        return QSeries.from_q_dict(coeffs, order)
    L = _macmahon_log_coeffs(order)
    return QSeries.from_q_dict({m: scalar(L[m] * m * (-1) ** m) for m in range(1, order + 1)}, order)


def sigma1F_tube_operator(w1, w2, max_grade: int, q_order: int, literal_phi: bool = False) -> GradedOperator:
    """-M(w1, w2) + (w1 + w2) Phi(q) Id, entries as q-series through q^q_order."""
    w1, w2 = scalar(w1), scalar(w2)
    phi = phi_series(q_order, literal_phi) * (w1 + w2)
    blocks = {}
    for d in range(max_grade + 1):
        B = m_block(w1, w2, d)
        n = len(B)
        blocks[d] = [[(-series_expand(B[i][j], q_order)) + (phi if i == j else QSeries.from_q_dict({}, q_order))
                      for j in range(n)] for i in range(n)]
    return GradedOperator(blocks, max_grade)


# ---------------------------------------------------------------------------
# fixed-point classes


@lru_cache(maxsize=None)
def tangent_euler(lam: Partition, w1=None, w2=None) -> ExactScalar:
    """Euler class of T Hilb(C^2) at the fixed point lam (arm/leg weights)."""
    w1 = T1 if w1 is None else w1
    w2 = T2 if w2 is None else w2
    acc = ONE
    for i, j in lam.cells():
        arm = lam.part(j) - i - 1
        leg = sum(1 for jj in range(j + 1, lam.length) if lam.part(jj) > i)
        acc = acc * (w1 * (arm + 1) - w2 * leg) * (w2 * (leg + 1) - w1 * arm)
    return acc


def fixed_point_classes(d: int, w1=None, w2=None) -> dict[Partition, list[ExactScalar]]:
    """[lam] in the Nakajima basis (column vectors in partitions_of(d) order).

    Eigenvectors of M at q = 0, scaled so that |1^d> = sum [lam] / e(T_lam).
    """
    w1 = T1 if w1 is None else scalar(w1)
    w2 = T2 if w2 is None else scalar(w2)
    basis = partitions_of(d)
    n = len(basis)
    M0 = [[_at_q0(x) for x in row] for row in m_block(w1, w2, d)]
    vecs = {}
    for lam in basis:
        ev = m0_eigenvalue(lam, w1, w2)
        A = [[M0[i][j] - (ev if i == j else ZERO) for j in range(n)] for i in range(n)]
        vecs[lam] = _kernel_vector(A)
    # unit = |1^d> = sum_lam c_lam v_lam
    unit_index = basis.index(Partition((1,) * d)) if d else 0
    cols = [vecs[lam] for lam in basis]
    A = [[cols[j][i] for j in range(n)] for i in range(n)]
    b = [ONE if i == unit_index else ZERO for i in range(n)]
    c = solve_linear(A, b)
    out = {}
    for lam, cl in zip(basis, c):
        e = tangent_euler(lam, w1, w2)
        out[lam] = [x * cl * e for x in vecs[lam]]
    return out


def _at_q0(x: ExactScalar) -> ExactScalar:
    return x.substitute(qh=0)


def _kernel_vector(A) -> list[ExactScalar]:
    """A nonzero vector spanning a one-dimensional kernel."""
    n = len(A)
    M = [list(row) for row in A]
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, n) if M[i][c]), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        inv = M[r][c].inverse()
        M[r] = [x * inv for x in M[r]]
        for i in range(n):
            if i != r and M[i][c]:
                f = M[i][c]
                M[i] = [x - f * y for x, y in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(n) if c not in pivots]
    if len(free) != 1:
        raise ValueError(f"kernel dimension {len(free)} != 1")
    f = free[0]
    v = [ZERO] * n
    v[f] = ONE
    for row, c in enumerate(pivots):
        v[c] = -M[row][f]
    return v


# ---------------------------------------------------------------------------
# gluing data


def coproduct_one(d: int, basis: LabelBasis = TRIVIAL_LABELS):
    out = []
    for mu in weighted_partitions_of(d, basis):
        lam = mu.underlying()
        sign = -1 if (lam.size - lam.length) % 2 else 1
        out.append((mu, scalar(sign * mu.automorphisms()), mu.dual(basis)))
    return out


def _axis_product(weights: Sequence[ExactScalar], axis: int) -> ExactScalar:
    acc = ONE
    for i, w in enumerate(weights):
        if i != axis:
            acc = acc * w
    return acc


def gluing_factor_dt(lam: Partition, weights=(T1, T2, T3), axis: int = 2) -> tuple[ExactScalar, int]:
    """((-1)^{|lam|-l} z(lam) (t1 t2 t3 / t_axis)^{l}, q-exponent -|lam|); axis is 0-based."""
    sign = -1 if (lam.size - lam.length) % 2 else 1
    val = scalar(sign * centralizer_order(lam)) * _axis_product(weights, axis) ** lam.length
    return val, -lam.size


def gluing_factor_gw(lam: Partition, weights=(T1, T2, T3), axis: int = 2) -> tuple[ExactScalar, int]:
    """(z(lam) (t1 t2 t3 / t_axis)^{l}, u-exponent 2 l)."""
    val = scalar(centralizer_order(lam)) * _axis_product(weights, axis) ** lam.length
    return val, 2 * lam.length
