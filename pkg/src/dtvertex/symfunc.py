"""Symmetric functions with power sums as the master basis.

Conversions to the Schur, complete and monomial bases go through exact
transition matrices (Murnaghan-Nakayama characters, explicit variable
expansion).  Specialization at x_i = q^{-(2i-1)/2} uses the closed form of the
power sums, p_k(q^rho) = q^{k/2} / (q^k - 1).
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

from .exactalg import ExactScalar, ONE, ZERO, QH, Q, row_reduce, scalar
from .partitions import EMPTY, Partition, centralizer_order, partitions_of, partitions_upto, transpose

BASES = ("p", "h", "m", "s")


class SymFunc:
    """Finite expansion in a declared basis; arithmetic happens in the p-basis."""

    __slots__ = ("expansion", "basis")

    def __init__(self, expansion: Mapping[Partition, ExactScalar] | None = None, basis: str = "p"):
        if basis not in BASES:
            raise ValueError(f"unknown basis {basis}")
        self.expansion = {k: scalar(v) for k, v in (expansion or {}).items() if scalar(v)}
        self.basis = basis

    @property
    def degree(self) -> int:
        return max((k.size for k in self.expansion), default=0)

    def to(self, basis: str) -> "SymFunc":
        if basis == self.basis:
            return self
        p = self if self.basis == "p" else _to_p(self)
        return p if basis == "p" else _from_p(p, basis)

    def __add__(self, other: "SymFunc") -> "SymFunc":
        a, b = self.to("p"), other.to("p")
        out = dict(a.expansion)
        for k, v in b.expansion.items():
            out[k] = out.get(k, ZERO) + v
        return SymFunc(out, "p")

    def __neg__(self):
        return SymFunc({k: -v for k, v in self.expansion.items()}, self.basis)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "SymFunc":
        c = scalar(c)
        return SymFunc({k: v * c for k, v in self.expansion.items()}, self.basis)

    def __mul__(self, other: "SymFunc") -> "SymFunc":
        if not isinstance(other, SymFunc):
            return self.scale(other)
        a, b = self.to("p"), other.to("p")
        out: dict = {}
        for k1, v1 in a.expansion.items():
            for k2, v2 in b.expansion.items():
                k = Partition(tuple(sorted(k1.parts + k2.parts, reverse=True)))
                out[k] = out.get(k, ZERO) + v1 * v2
        return SymFunc(out, "p")

    def __eq__(self, other):
        if not isinstance(other, SymFunc):
            return NotImplemented
        return (self - other).to("p").expansion == {}

    def is_zero(self) -> bool:
        return not self.expansion

    def serialize(self) -> str:
        items = sorted(self.expansion.items(), key=lambda kv: (kv[0].size, [-x for x in kv[0].parts]))
        return " + ".join(f"({v.serialize()})*{self.basis}{k}" for k, v in items) or "0"

    def __repr__(self):
        return f"SymFunc({self.serialize()})"


def p(*parts: int) -> SymFunc:
    return SymFunc({Partition(tuple(sorted(parts, reverse=True))): ONE}, "p")


def s(lam: Partition) -> SymFunc:
    return SymFunc({lam: ONE}, "s")


def h(lam: Partition) -> SymFunc:
    return SymFunc({lam: ONE}, "h")


# ---------------------------------------------------------------------------
# transition data


@lru_cache(maxsize=None)
def _border_strips(lam: Partition, k: int) -> tuple[tuple[Partition, int], ...]:
    """Ways to remove a border strip of size k: (remaining shape, height)."""
    out = []
    parts = list(lam.parts)
    n = len(parts)
    # use the beta-number (abacus) description
    beta = [parts[i] - i + n - 1 for i in range(n)]
    bset = set(beta)
    for b in beta:
        nb = b - k
        if nb < 0 or nb in bset:
            continue
        height = sum(1 for x in beta if nb < x < b)
        newb = sorted([x for x in beta if x != b] + [nb], reverse=True)
        new_parts = [newb[i] - (n - 1 - i) for i in range(n)]
        out.append((Partition(tuple(x for x in new_parts if x > 0)), height))
    return tuple(out)


@lru_cache(maxsize=None)
def character(lam: Partition, mu: Partition) -> int:
    """chi^lam(mu) by Murnaghan-Nakayama."""
    if lam.size != mu.size:
        return 0
    if not mu.parts:
        return 1
    k = mu.parts[0]
    rest = Partition(mu.parts[1:])
    return sum((-1) ** ht * character(nu, rest) for nu, ht in _border_strips(lam, k))


@lru_cache(maxsize=None)
def _p_in_m(n: int) -> dict:
    """p_lam = sum_mu c[lam][mu] m_mu, via expansion in n variables."""
    out = {}
    for lam in partitions_of(n):
        poly = {(0,) * n: 1}
        for part in lam.parts:
            nxt: dict = defaultdict(int)
            for e, c in poly.items():
                for i in range(n):
                    e2 = list(e)
                    e2[i] += part
                    nxt[tuple(e2)] += c
            poly = nxt
        row = {}
        for mu in partitions_of(n):
            key = tuple(list(mu.parts) + [0] * (n - len(mu.parts)))
            if poly.get(key):
                row[mu] = poly[key]
        out[lam] = row
    return out


@lru_cache(maxsize=None)
def _m_in_p(n: int) -> dict:
    """Inverse of _p_in_m over the rationals."""
    parts = list(partitions_of(n))
    A = _p_in_m(n)
    # solve m_mu = sum_lam x[mu][lam] p_lam: matrix inverse with Fractions
    size = len(parts)
    M = [[Fraction(A[lam].get(mu, 0)) for mu in parts] for lam in parts]
    inv = _frac_inverse(M)  # p = M m, so m = M^{-1} p
    return {parts[i]: {parts[j]: inv[i][j] for j in range(size) if inv[i][j]} for i in range(size)}


def _frac_inverse(M):
    n = len(M)
    A = [list(row) + [Fraction(int(i == k)) for k in range(n)] for i, row in enumerate(M)]
    for c in range(n):
        piv = next(r for r in range(c, n) if A[r][c])
        A[c], A[piv] = A[piv], A[c]
        f = A[c][c]
        A[c] = [x / f for x in A[c]]
        for r in range(n):
            if r != c and A[r][c]:
                g = A[r][c]
                A[r] = [x - g * y for x, y in zip(A[r], A[c])]
    return [row[n:] for row in A]


def _to_p(f: SymFunc) -> SymFunc:
    out: dict = {}

    def add(k, v):
        out[k] = out.get(k, ZERO) + v

    for lam, c in f.expansion.items():
        if f.basis == "s":
            for mu in partitions_of(lam.size):
                chi = character(lam, mu)
                if chi:
                    add(mu, c * Fraction(chi, centralizer_order(mu)))
        elif f.basis == "h":
            prod = {EMPTY: Fraction(1)}
            for part in lam.parts:
                nxt: dict = defaultdict(Fraction)
                for k1, v1 in prod.items():
                    for mu in partitions_of(part):
                        k = Partition(tuple(sorted(k1.parts + mu.parts, reverse=True)))
                        nxt[k] += v1 * Fraction(1, centralizer_order(mu))
                prod = nxt
            for mu, v in prod.items():
                if v:
                    add(mu, c * v)
        elif f.basis == "m":
            for mu, v in _m_in_p(lam.size)[lam].items():
                add(mu, c * v)
    return SymFunc(out, "p")


def _from_p(f: SymFunc, basis: str) -> SymFunc:
    out: dict = {}

    def add(k, v):
        out[k] = out.get(k, ZERO) + v

    if basis == "s":
        for mu, c in f.expansion.items():
            for lam in partitions_of(mu.size):
                chi = character(lam, mu)
                if chi:
                    add(lam, c * chi)
    elif basis == "m":
        for lam, c in f.expansion.items():
            for mu, v in _p_in_m(lam.size)[lam].items():
                add(mu, c * v)
    elif basis == "h":
        # triangular solve degree by degree using h -> p images
        by_deg: dict = defaultdict(dict)
        for k, v in f.expansion.items():
            by_deg[k.size][k] = v
        for n, part in by_deg.items():
            parts = list(partitions_of(n))
            images = [_to_p(h(lam)).expansion for lam in parts]
            A = [[scalar(images[j].get(mu, 0)) for j in range(len(parts))] for mu in parts]
            b = [part.get(mu, ZERO) for mu in parts]
            from .exactalg import solve_linear
            x = solve_linear(A, b)
            for lam, v in zip(parts, x):
                if v:
                    add(lam, v)
    return SymFunc(out, basis)


def hall_pairing(f: SymFunc, g: SymFunc) -> ExactScalar:
    a, b = f.to("p"), g.to("p")
    acc = ZERO
    for k, v in a.expansion.items():
        if k in b.expansion:
            acc = acc + v * b.expansion[k] * centralizer_order(k)
    return acc


# ---------------------------------------------------------------------------
# operations


def _jt_entry(n: int) -> SymFunc:
    if n < 0:
        return SymFunc({}, "p")
    if n == 0:
        return SymFunc({EMPTY: ONE}, "p")
    return h(Partition((n,))).to("p")


@lru_cache(maxsize=None)
def skew_schur(lam: Partition, eta: Partition) -> SymFunc:
    """s_{lam/eta} by the Jacobi-Trudi determinant det h_{lam_i - eta_j - i + j}."""
    if not lam.contains(eta):
        return SymFunc({}, "p")
    n = len(lam.parts)
    if n == 0:
        return SymFunc({EMPTY: ONE}, "p")
    M = [[lam.part(i) - eta.part(j) - i + j for j in range(n)] for i in range(n)]
    total = SymFunc({}, "p")
    for perm in itertools.permutations(range(n)):
        term = SymFunc({EMPTY: ONE}, "p")
        for i, j in enumerate(perm):
            e = _jt_entry(M[i][j])
            if e.is_zero():
                term = None
                break
            term = term * e
        if term is None:
            continue
        inv = sum(1 for a in range(n) for b in range(a + 1, n) if perm[a] > perm[b])
        total = total + (term if inv % 2 == 0 else -term)
    return total


def skew_schur_tableaux(lam: Partition, eta: Partition) -> SymFunc:
    """Monomial expansion of s_{lam/eta} by counting semistandard tableaux (oracle)."""
    if not lam.contains(eta):
        return SymFunc({}, "m")
    cells = [(r, c) for r in range(len(lam.parts)) for c in range(eta.part(r), lam.part(r))]
    n = len(cells)
    out: dict = {}
    for mu in partitions_of(n):
        out[mu] = _count_ssyt(cells, mu)
    return SymFunc({k: v for k, v in out.items() if v}, "m")


def _count_ssyt(cells, content: Partition) -> int:
    """Semistandard fillings of skew cells with the given content (entries 1..l)."""
    cells = sorted(cells)
    k = len(content.parts)
    need = list(content.parts)
    filling: dict = {}

    def rec(idx):
        if idx == len(cells):
            return 1
        r, c = cells[idx]
        lo = 1
        if (r, c - 1) in filling:
            lo = max(lo, filling[(r, c - 1)])
        if (r - 1, c) in filling:
            lo = max(lo, filling[(r - 1, c)] + 1)
        total = 0
        for v in range(lo, k + 1):
            if need[v - 1] == 0:
                continue
            need[v - 1] -= 1
            filling[(r, c)] = v
            total += rec(idx + 1)
            del filling[(r, c)]
            need[v - 1] += 1
        return total

    return rec(0)


def _derive_pk(g: SymFunc, k: int) -> SymFunc:
    """k d/dp_k on a p-basis expansion."""
    out: dict = {}
    for lam, c in g.expansion.items():
        m = lam.parts.count(k)
        if m:
            parts = list(lam.parts)
            parts.remove(k)
            key = Partition(tuple(parts))
            out[key] = out.get(key, ZERO) + c * (k * m)
    return SymFunc(out, "p")


def adjoint_apply(f: SymFunc, g: SymFunc) -> SymFunc:
    """f^perp g, with p_k^perp = k d/dp_k."""
    fp, gp = f.to("p"), g.to("p")
    out = SymFunc({}, "p")
    for lam, c in fp.expansion.items():
        cur = gp
        for part in lam.parts:
            cur = _derive_pk(cur, part)
        out = out + cur.scale(c)
    return out


@lru_cache(maxsize=None)
def pk_qrho(k: int) -> ExactScalar:
    """p_k(q^rho) = sum_i q^{-k(2i-1)/2} = q^{k/2}/(q^k - 1)."""
    return QH**k / (Q**k - 1)


@lru_cache(maxsize=None)
def hn_qrho(n: int) -> ExactScalar:
    """h_n(q^rho) = q^{-n/2} / prod_{k=1..n} (1 - q^{-k})."""
    val = QH ** (-n)
    for k in range(1, n + 1):
        val = val / (1 - Q ** (-k))
    return val


def specialize_qrho(f: SymFunc) -> ExactScalar:
    acc = ZERO
    for lam, c in f.to("p").expansion.items():
        term = c
        for part in lam.parts:
            term = term * pk_qrho(part)
        acc = acc + term
    return acc


def specialize_qrho_h(f: SymFunc) -> ExactScalar:
    """Same value through the complete-symmetric expansion (cross-check route)."""
    acc = ZERO
    for lam, c in f.to("h").expansion.items():
        term = c
        for part in lam.parts:
            term = term * hn_qrho(part)
        acc = acc + term
    return acc


@lru_cache(maxsize=None)
def skew_qrho(lam: Partition, eta: Partition) -> ExactScalar:
    return specialize_qrho(skew_schur(lam, eta))


def two_leg_entry(lam: Partition, mu: Partition) -> ExactScalar:
    lt = transpose(lam)
    acc = ZERO
    for k in range(min(lam.size, mu.size) + 1):
        for eta in partitions_of(k):
            if lt.contains(eta) and mu.contains(eta):
                acc = acc + skew_qrho(lt, eta) * skew_qrho(mu, eta)
    return acc


def two_leg_matrix(n: int) -> tuple[list[Partition], list[Partition], list[list[ExactScalar]]]:
    """Rows lam |- n, columns mu with |mu| < n."""
    if n < 1:
        raise ValueError("n >= 1 required")
    rows = list(partitions_of(n))
    cols = partitions_upto(n - 1)
    return rows, cols, [[two_leg_entry(lam, mu) for mu in cols] for lam in rows]


def rank_certificate(M) -> tuple[int, list[tuple[int, int]]]:
    if not M or not M[0]:
        return 0, []
    return row_reduce(M)
