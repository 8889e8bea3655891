"""Exact rational functions in t1, t2, t3 and q = qh**2, plus truncated q-series.

Polynomial arithmetic is delegated to FLINT (via python-flint); this module adds
normalized fractions, Laurent series in qh, Pade-style reconstruction and a small
exact linear algebra kit used by the higher layers.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Sequence

import flint

VARS = ("t1", "t2", "t3", "qh")
CTX = flint.fmpq_mpoly_ctx.get(VARS, "deglex")
_T1, _T2, _T3, _QH = CTX.gens()
_ONE = CTX.from_dict({(0, 0, 0, 0): 1})
_ZERO = CTX.from_dict({})


class ExactAlgError(Exception):
    code = "exactalg"


class NonLaurent(ExactAlgError):
    code = "NonLaurent"


class NoFit(ExactAlgError):
    code = "NoFit"


class AmbiguousFit(ExactAlgError):
    code = "AmbiguousFit"


class SpecializationPole(ExactAlgError):
    code = "SpecializationPole"


class SingularSystem(ExactAlgError):
    code = "SingularSystem"


def _poly(x) -> flint.fmpq_mpoly:
    if isinstance(x, flint.fmpq_mpoly):
        return x
    if isinstance(x, Fraction):
        return CTX.from_dict({(0, 0, 0, 0): flint.fmpq(x.numerator, x.denominator)}) if x else _ZERO
    if isinstance(x, (int, flint.fmpz, flint.fmpq)):
        return CTX.from_dict({(0, 0, 0, 0): x}) if x else _ZERO
    raise TypeError(f"cannot coerce {type(x).__name__} to a polynomial")


class ExactScalar:
    """Normalized fraction num/den of polynomials in t1,t2,t3,qh.

    The denominator is monic in deglex order and coprime to the numerator, so
    structural equality is mathematical equality.
    """

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num=0, den=1, _normalized: bool = False):
        if isinstance(num, ExactScalar):
            if den == 1:
                self.num, self.den, self._hash = num.num, num.den, None
                return
            num, den = num.num * _den_of(den), num.den * _num_of(den)
        n, d = _poly(num), _poly(den)
        if d.is_zero():
            raise ZeroDivisionError("zero denominator")
        if not _normalized:
            if n.is_zero():
                d = _ONE
            elif not d.is_constant():
                g = n.gcd(d)
                if not g.is_one():
                    n, d = n / g, d / g
            lc = d.leading_coefficient()
            if lc != 1:
                n, d = n / lc, d / lc
        self.num, self.den, self._hash = n, d, None

    # construction helpers -------------------------------------------------
    @classmethod
    def parse(cls, text: str) -> "ExactScalar":
        return _Parser(text).parse()

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "ExactScalar | None":
        if isinstance(other, ExactScalar):
            return other
        if isinstance(other, (int, Fraction, flint.fmpq, flint.fmpz, flint.fmpq_mpoly)):
            return ExactScalar(other)
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if self.den == o.den:
            return ExactScalar(self.num + o.num, self.den)
        return ExactScalar(self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return ExactScalar(-self.num, self.den, _normalized=True)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if o.den.is_one() and self.den.is_one():
            return ExactScalar(self.num * o.num, _ONE, _normalized=True)
        return ExactScalar(self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def inverse(self) -> "ExactScalar":
        if self.num.is_zero():
            raise ZeroDivisionError("inverse of zero")
        return ExactScalar(self.den, self.num)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        return ExactScalar(self.num**k, self.den**k, _normalized=True)

    def __eq__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self.num == o.num and self.den == o.den

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.serialize())
        return self._hash

    def __bool__(self):
        return not self.num.is_zero()

    # queries --------------------------------------------------------------
    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_constant(self) -> bool:
        return self.num.is_constant() and self.den.is_constant()

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError("not a constant")
        c = self.num.to_dict().get((0, 0, 0, 0), 0) if not self.num.is_zero() else 0
        c = flint.fmpq(c) / flint.fmpq(self.den.to_dict()[(0, 0, 0, 0)])
        return Fraction(int(c.p), int(c.q))

    def qh_free(self) -> bool:
        return self.num.degrees()[3] == 0 and self.den.degrees()[3] == 0

    def free_of(self, var: str) -> bool:
        i = VARS.index(var)
        return self.num.degrees()[i] == 0 and self.den.degrees()[i] == 0

    def substitute(self, **values) -> "ExactScalar":
        """Replace variables by ExactScalars (or numbers)."""
        gens = [ExactScalar(g) for g in CTX.gens()]
        for k, v in values.items():
            gens[VARS.index(k)] = v if isinstance(v, ExactScalar) else ExactScalar(v)
        return _eval_poly(self.num, gens) / _eval_poly(self.den, gens)

    def serialize(self) -> str:
        if self.den.is_one():
            return str(self.num)
        return f"({self.num})/({self.den})"

    __str__ = serialize

    def __repr__(self):
        return f"ExactScalar({self.serialize()!r})"


def _num_of(x):
    return x.num if isinstance(x, ExactScalar) else _poly(x)


def _den_of(x):
    return x.den if isinstance(x, ExactScalar) else _ONE


def _eval_poly(p: flint.fmpq_mpoly, gens: Sequence[ExactScalar]) -> ExactScalar:
    if all(g.den.is_one() for g in gens):
        return ExactScalar(p.compose(*[g.num for g in gens]))
    # Horner-free but exact: accumulate monomials with cached powers.
    cache: dict[tuple[int, int], ExactScalar] = {}

    def pw(i, e):
        key = (i, e)
        if key not in cache:
            cache[key] = gens[i] ** e
        return cache[key]

    acc = ExactScalar(0)
    for mono, c in p.terms():
        term = ExactScalar(c)
        for i, e in enumerate(mono):
            if e:
                term = term * pw(i, e)
        acc = acc + term
    return acc


T1 = ExactScalar(_T1)
T2 = ExactScalar(_T2)
T3 = ExactScalar(_T3)
QH = ExactScalar(_QH)
Q = QH * QH
ZERO = ExactScalar(0)
ONE = ExactScalar(1)


def scalar(x) -> ExactScalar:
    return x if isinstance(x, ExactScalar) else ExactScalar(x)


def linear_form(a: Sequence) -> ExactScalar:
    """a1 t1 + a2 t2 + a3 t3 for rational a."""
    out = ZERO
    for ai, g in zip(a, (T1, T2, T3)):
        if ai:
            out = out + scalar(Fraction(ai)) * g
    return out


def substitute_cy(f: ExactScalar) -> ExactScalar:
    """Impose t1 + t2 + t3 = 0 by eliminating t3."""
    sub = (_T1, _T2, -_T1 - _T2, _QH)
    d = f.den.compose(*sub)
    if d.is_zero():
        raise SpecializationPole(f"denominator {f.den} vanishes on t1+t2+t3=0")
    return ExactScalar(f.num.compose(*sub), d)


# ---------------------------------------------------------------------------
# text parser for the canonical serialization (and hand-written inputs)

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")


class _Parser:
    def __init__(self, text: str):
        self.toks: list[tuple[str, str]] = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"bad token near {text[pos:pos + 10]!r}")
            pos = m.end()
            if m.group(1):
                self.toks.append(("int", m.group(1)))
            elif m.group(2):
                self.toks.append(("name", m.group(2)))
            else:
                self.toks.append(("op", "^" if m.group(3) == "**" else m.group(3)))
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("end", "")

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self) -> ExactScalar:
        v = self.expr()
        if self.peek()[0] != "end":
            raise ValueError(f"trailing input at token {self.peek()}")
        return v

    def expr(self):
        v = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            w = self.term()
            v = v + w if op == "+" else v - w
        return v

    def term(self):
        v = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            w = self.unary()
            v = v * w if op == "*" else v / w
        return v

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            sign = 1
            if self.peek() == ("op", "-"):
                self.take()
                sign = -1
            kind, val = self.take()
            if kind != "int":
                raise ValueError("exponent must be an integer")
            return base ** (sign * int(val))
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "int":
            return ExactScalar(int(val))
        if kind == "name":
            if val == "q":
                return Q
            if val not in VARS:
                raise ValueError(f"unknown variable {val}")
            return ExactScalar(CTX.gens()[VARS.index(val)])
        if (kind, val) == ("op", "("):
            v = self.expr()
            if self.take() != ("op", ")"):
                raise ValueError("unbalanced parenthesis")
            return v
        raise ValueError(f"unexpected token {val!r}")


# ---------------------------------------------------------------------------
# truncated Laurent series in qh


class QSeries:
    """sum_k coefficients[k] * qh**(offset + k), known through qh**truncation_order.

    offset and truncation_order are counted in half-units of q.
    """

    __slots__ = ("offset", "coefficients", "truncation_order")

    def __init__(self, offset: int, coefficients: Sequence[ExactScalar], truncation_order: int | None = None):
        coeffs = [scalar(c) for c in coefficients]
        if truncation_order is None:
            truncation_order = offset + len(coeffs) - 1
        n = truncation_order - offset + 1
        if n < 0:
            raise ValueError("truncation below offset")
        coeffs = coeffs[:n] + [ZERO] * (n - len(coeffs))
        self.offset = offset
        self.coefficients = coeffs
        self.truncation_order = truncation_order

    # --- constructors
    @classmethod
    def from_q_dict(cls, terms: dict[int, ExactScalar], q_order: int) -> "QSeries":
        """Integer q-powers -> series known through q**q_order."""
        lo = min([k for k, v in terms.items() if v] + [q_order])
        coeffs = [ZERO] * (2 * (q_order - lo) + 1)
        for k, v in terms.items():
            if v and k <= q_order:
                coeffs[2 * (k - lo)] = coeffs[2 * (k - lo)] + v
        return cls(2 * lo, coeffs, 2 * q_order)

    @classmethod
    def one(cls, q_order: int) -> "QSeries":
        return cls.from_q_dict({0: ONE}, q_order)

    # --- access
    def coeff_half(self, k: int) -> ExactScalar:
        if k > self.truncation_order:
            raise IndexError(f"qh^{k} beyond truncation {self.truncation_order}")
        if k < self.offset:
            return ZERO
        return self.coefficients[k - self.offset]

    def coeff(self, k: int) -> ExactScalar:
        """Coefficient of q**k."""
        return self.coeff_half(2 * k)

    def q_terms(self) -> dict[int, ExactScalar]:
        out = {}
        for i, c in enumerate(self.coefficients):
            if c:
                e = self.offset + i
                if e % 2:
                    raise ValueError("series has half-integer q powers")
                out[e // 2] = c
        return out

    def valuation(self) -> int | None:
        for i, c in enumerate(self.coefficients):
            if c:
                return self.offset + i
        return None

    def truncate(self, order_half: int) -> "QSeries":
        return QSeries(self.offset, self.coefficients, min(order_half, self.truncation_order))

    # --- arithmetic
    def _align(self, other: "QSeries"):
        lo = min(self.offset, other.offset)
        hi = min(self.truncation_order, other.truncation_order)
        return lo, hi

    def __add__(self, other):
        if not isinstance(other, QSeries):
            other = QSeries(0, [scalar(other)], self.truncation_order)
        lo, hi = self._align(other)
        hi = max(hi, lo - 1)
        return QSeries(lo, [self.coeff_half(k) + other.coeff_half(k) for k in range(lo, hi + 1)], hi)

    __radd__ = __add__

    def __neg__(self):
        return QSeries(self.offset, [-c for c in self.coefficients], self.truncation_order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, QSeries):
            s = scalar(other)
            if not s.qh_free():
                raise TypeError("multiply by qh via shift()")
            return QSeries(self.offset, [c * s for c in self.coefficients], self.truncation_order)
        lo = self.offset + other.offset
        # precision: each factor known through its truncation relative to its own valuation
        va = self.valuation()
        vb = other.valuation()
        if va is None or vb is None:
            hi = min(self.truncation_order + (other.offset if vb is None else vb),
                     other.truncation_order + (self.offset if va is None else va))
            return QSeries(lo, [], max(hi, lo - 1))
        hi = min(self.truncation_order + vb, other.truncation_order + va)
        out = [ZERO] * (hi - lo + 1)
        a, b = self.coefficients, other.coefficients
        for i, x in enumerate(a):
            if not x:
                continue
            for j, y in enumerate(b):
                k = i + j
                if k >= len(out):
                    break
                if y:
                    out[k] = out[k] + x * y
        return QSeries(lo, out, hi)

    __rmul__ = __mul__

    def shift(self, half_units: int) -> "QSeries":
        return QSeries(self.offset + half_units, self.coefficients, self.truncation_order + half_units)

    def inverse(self) -> "QSeries":
        v = self.valuation()
        if v is None:
            raise ZeroDivisionError("series is zero to known order")
        c = self.coefficients[v - self.offset:]
        n = self.truncation_order - v  # relative precision
        inv0 = c[0].inverse()
        out = [inv0]
        for k in range(1, n + 1):
            acc = ZERO
            for j in range(1, k + 1):
                if j < len(c) and c[j]:
                    acc = acc + c[j] * out[k - j]
            out.append(-acc * inv0)
        return QSeries(-v, out, -v + n)

    def __truediv__(self, other):
        if isinstance(other, QSeries):
            return self * other.inverse()
        return self * scalar(other).inverse()

    def map(self, fn) -> "QSeries":
        return QSeries(self.offset, [fn(c) for c in self.coefficients], self.truncation_order)

    def __eq__(self, other):
        if not isinstance(other, QSeries):
            return NotImplemented
        lo, hi = self._align(other)
        return self.truncation_order == other.truncation_order and all(
            self.coeff_half(k) == other.coeff_half(k) for k in range(lo, hi + 1))

    def agrees_with(self, other: "QSeries") -> bool:
        """Equality on the common known range."""
        lo, hi = self._align(other)
        return all(self.coeff_half(k) == other.coeff_half(k) for k in range(lo, hi + 1))

    def serialize(self) -> str:
        body = "; ".join(c.serialize() for c in self.coefficients)
        return f"offset={self.offset} order={self.truncation_order} [{body}]"

    def __repr__(self):
        return f"QSeries({self.serialize()})"


def _qh_coefficients(p: flint.fmpq_mpoly) -> dict[int, flint.fmpq_mpoly]:
    """Split p by powers of qh, coefficients free of qh."""
    parts: dict[int, dict] = {}
    for mono, c in p.terms():
        parts.setdefault(mono[3], {})[(mono[0], mono[1], mono[2], 0)] = c
    return {k: CTX.from_dict(v) for k, v in parts.items()}


def series_expand(f: ExactScalar, order) -> QSeries:
    """Laurent expansion of f in qh, known through q**order (order may be a half-integer)."""
    f = scalar(f)
    trunc = int(Fraction(order) * 2)
    if Fraction(order) * 2 != trunc:
        raise ValueError("order must be a multiple of 1/2")
    if f.is_zero():
        return QSeries(min(0, trunc), [], trunc) if trunc >= 0 else QSeries(trunc, [], trunc)
    nd, dd = _qh_coefficients(f.num), _qh_coefficients(f.den)
    if not dd:
        raise NonLaurent("denominator vanishes identically")
    vn, vd = min(nd), min(dd)
    v = vn - vd
    if trunc < v:
        return QSeries(trunc, [], trunc)
    n = trunc - v
    d0 = ExactScalar(dd[vd])
    inv0 = d0.inverse()
    dcoef = {k - vd: ExactScalar(p) for k, p in dd.items() if k - vd > 0}
    out: list[ExactScalar] = []
    for k in range(n + 1):
        acc = ExactScalar(nd[vn + k]) if (vn + k) in nd else ZERO
        for j, dj in dcoef.items():
            if j <= k:
                acc = acc - dj * out[k - j]
        out.append(acc * inv0)
    return QSeries(v, out, trunc)


# ---------------------------------------------------------------------------
# exact linear algebra over the t/qh field


def solve_linear(A: Sequence[Sequence[ExactScalar]], b: Sequence[ExactScalar]) -> list[ExactScalar]:
    """Solve the square system A x = b; raises SingularSystem if det A = 0."""
    n = len(A)
    M = [[scalar(x) for x in row] + [scalar(bi)] for row, bi in zip(A, b)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col]), None)
        if piv is None:
            raise SingularSystem(f"no pivot in column {col}")
        M[col], M[piv] = M[piv], M[col]
        inv = M[col][col].inverse()
        M[col] = [x * inv for x in M[col]]
        for r in range(n):
            if r != col and M[r][col]:
                f = M[r][col]
                M[r] = [x - f * y for x, y in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def row_reduce(A: Sequence[Sequence[ExactScalar]]) -> tuple[int, list[tuple[int, int]]]:
    """Rank and pivot positions (row, col) of A by Gaussian elimination."""
    M = [[scalar(x) for x in row] for row in A]
    rows = len(M)
    cols = len(M[0]) if rows else 0
    pivots = []
    used = [False] * rows
    for c in range(cols):
        piv = next((r for r in range(rows) if not used[r] and M[r][c]), None)
        if piv is None:
            continue
        used[piv] = True
        pivots.append((piv, c))
        inv = M[piv][c].inverse()
        for r in range(rows):
            if r != piv and not used[r] and M[r][c]:
                f = M[r][c] * inv
                M[r] = [x - f * y for x, y in zip(M[r], M[piv])]
    return len(pivots), pivots


def solve_least(A: Sequence[Sequence[ExactScalar]], b: Sequence[ExactScalar]) -> list[ExactScalar]:
    """Unique solution of an overdetermined consistent system.

    Raises SingularSystem if the column rank is deficient and NoFit if the
    extra equations are inconsistent.
    """
    A = [[scalar(x) for x in row] for row in A]
    b = [scalar(x) for x in b]
    ncols = len(A[0]) if A else 0
    rank, piv = row_reduce(A)
    if rank < ncols:
        raise SingularSystem(f"rank {rank} < {ncols} unknowns")
    rows = [r for r, _ in piv]
    x = solve_linear([A[r] for r in rows], [b[r] for r in rows])
    for r in range(len(A)):
        lhs = ZERO
        for a, xi in zip(A[r], x):
            if a:
                lhs = lhs + a * xi
        if lhs != b[r]:
            raise NoFit(f"equation {r} inconsistent")
    return x


# ---------------------------------------------------------------------------
# rational reconstruction


def rational_reconstruct(s: QSeries, max_num_deg: int, max_den_deg: int) -> ExactScalar:
    """Rational function of q, degrees bounded as given, matching s.

    The numerator degree counts the leading power of q, so q/(1+q)^2 fits
    bounds (1, 2).  Every known coefficient beyond those used to set up the
    linear system is checked.
    """
    v = s.valuation()
    if v is None:
        return ZERO
    if v % 2 or any(c for i, c in enumerate(s.coefficients) if (s.offset + i) % 2):
        raise NoFit("series has half-integer q powers")
    vq = v // 2
    known = (s.truncation_order - v) // 2 + 1
    coeffs = [s.coeff(vq + k) for k in range(known)]
    m = max_num_deg - max(vq, 0)
    if m < 0:
        raise NoFit(f"valuation q^{vq} exceeds numerator bound {max_num_deg}")
    n = max_den_deg
    if known < m + n + 1:
        raise AmbiguousFit(f"{known} coefficients cannot pin degrees ({m},{n})")
    for nn in range(n + 1):
        # unknowns b_1..b_nn; equations: coefficient k of Q*S vanishes, k = m+1..m+nn
        if nn:
            A = [[coeffs[k - j] if k - j >= 0 else ZERO for j in range(1, nn + 1)] for k in range(m + 1, m + nn + 1)]
            rhs = [-coeffs[k] for k in range(m + 1, m + nn + 1)]
            try:
                b = solve_linear(A, rhs)
            except SingularSystem:
                continue
        else:
            b = []
        qc = [ONE] + b
        prod = []
        for k in range(known):
            acc = ZERO
            for j, bj in enumerate(qc):
                if j <= k and bj:
                    acc = acc + bj * coeffs[k - j]
            prod.append(acc)
        if all(not c for c in prod[m + 1:]):
            num = ZERO
            den = ZERO
            for k in range(m + 1):
                if prod[k]:
                    num = num + prod[k] * Q ** k
            for j, bj in enumerate(qc):
                if bj:
                    den = den + bj * Q ** j
            return num * Q ** vq / den
    raise NoFit(f"no rational function with degrees ({max_num_deg},{max_den_deg}) matches")


def q_poly(coeffs: Iterable) -> ExactScalar:
    """sum_k c_k q^k."""
    out = ZERO
    for k, c in enumerate(coeffs):
        if c:
            out = out + scalar(c) * Q ** k
    return out


def q_degrees(f: ExactScalar) -> tuple[int, int]:
    """Degrees in q of numerator and denominator (q-integral functions only)."""
    return f.num.degrees()[3] // 2, f.den.degrees()[3] // 2
