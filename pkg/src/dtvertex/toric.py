"""Toric 3-fold model, marking enumeration, localization assembly and the GW/DT transform."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

from .exactalg import ExactScalar, QSeries, ONE, ZERO, Q, linear_form, scalar, series_expand
from .fock import coproduct_one, gluing_factor_dt
from .partitions import EMPTY, LEG_FRAME, Partition, minimal_volume, partitions_of, transpose
from . import vertex as vx


class PolytopeError(ValueError):
    code = "InvalidPolytope"


class InfeasibleClass(ValueError):
    code = "InfeasibleClass"


class MissingCappedDatum(KeyError):
    code = "MissingCappedDatum"


class ResidualImaginary(ArithmeticError):
    code = "ResidualImaginary"


Frame = tuple[tuple[int, int, int], tuple[int, int, int], tuple[int, int, int]]


@dataclass(frozen=True)
class Edge:
    """An edge with one or two ends.

    axis_map[k] = (p, r, e): at end k the edge runs along local axis e, and
    local axes p, r play the roles of the a- and b-twisted fibre directions.
    """

    id: str
    ends: tuple[str, ...]
    ab: tuple[int, int] = (0, 0)
    axis_map: tuple[tuple[int, int, int], ...] = ()

    @property
    def compact(self) -> bool:
        return len(self.ends) == 2


@dataclass
class ToricPolytope:
    vertices: dict[str, Frame]
    edges: list[Edge]
    classes: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ToricPolytope":
        try:
            verts = {}
            for v in data["vertices"]:
                w = tuple(tuple(int(x) for x in row) for row in v["weights"])
                if len(w) != 3 or any(len(r) != 3 for r in w):
                    raise PolytopeError(f"vertex {v['id']}: weights must be three 3-vectors")
                verts[str(v["id"])] = w
            edges = []
            for e in data["edges"]:
                ends = tuple(str(x) for x in e["ends"] if x is not None)
                amap = tuple(tuple(int(x) for x in m) for m in e["axis_map"])
                ab = tuple(int(x) for x in e.get("ab", (0, 0)))
                edges.append(Edge(str(e["id"]), ends, ab, amap))
            classes = {str(k): tuple(int(x) for x in v) for k, v in data.get("classes", {}).items()}
        except (KeyError, TypeError) as exc:
            raise PolytopeError(f"malformed polytope: {exc}") from exc
        poly = cls(verts, edges, classes)
        poly.validate()
        return poly

    @classmethod
    def load(cls, path: str | Path) -> "ToricPolytope":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise PolytopeError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        slots: dict[tuple[str, int], str] = {}
        for e in self.edges:
            if len(e.axis_map) != len(e.ends) or not e.ends:
                raise PolytopeError(f"edge {e.id}: axis_map must have one entry per end")
            for v, m in zip(e.ends, e.axis_map):
                if v not in self.vertices:
                    raise PolytopeError(f"edge {e.id}: unknown vertex {v}")
                if sorted(m) != [0, 1, 2]:
                    raise PolytopeError(f"edge {e.id}: axis_map {m} is not a permutation")
                key = (v, m[2])
                if key in slots:
                    raise PolytopeError(f"vertex {v}: axis {m[2] + 1} used by {slots[key]} and {e.id}")
                slots[key] = e.id
            if e.compact:
                (v, w), (m, n) = e.ends, e.axis_map
                tv, tw = self.vertices[v], self.vertices[w]
                a, b = e.ab
                t3 = tv[m[2]]
                want = (
                    tuple(x - a * y for x, y in zip(tv[m[0]], t3)),
                    tuple(x - b * y for x, y in zip(tv[m[1]], t3)),
                    tuple(-y for y in t3),
                )
                got = (tw[n[0]], tw[n[1]], tw[n[2]])
                if want != got:
                    raise PolytopeError(f"edge {e.id}: weights at {w} are {got}, expected {want}")
            if e.id in self.classes and not e.compact:
                raise PolytopeError(f"edge {e.id}: open edges carry no curve class")
        for v in self.vertices:
            for ax in range(3):
                if (v, ax) not in slots:
                    raise PolytopeError(f"vertex {v}: axis {ax + 1} has no edge")

    def compact_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.compact]

    def vertex_edges(self, v: str) -> list[tuple[Edge, int]]:
        return [(e, k) for e in self.edges for k, x in enumerate(e.ends) if x == v]


def local_weights(P: ToricPolytope, v: str) -> tuple[ExactScalar, ExactScalar, ExactScalar]:
    return tuple(linear_form(w) for w in P.vertices[v])


# ---------------------------------------------------------------------------
# markings


@dataclass(frozen=True)
class CappedMarking:
    """Partition per half-edge (edge id, end index); open edges are always empty."""

    assignment: tuple[tuple[tuple[str, int], Partition], ...]

    def get(self, edge_id: str, end: int) -> Partition:
        return dict(self.assignment).get((edge_id, end), EMPTY)

    def degrees(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (eid, _), lam in self.assignment:
            out[eid] = lam.size
        return out

    def is_balanced(self) -> bool:
        d = dict(self.assignment)
        return all(d[(e, 0)].size == d[(e, 1)].size for (e, k) in d if k == 0 and (e, 1) in d)


def edge_degrees(P: ToricPolytope, beta: Sequence[int]) -> list[dict[str, int]]:
    """All nonnegative edge-degree vectors with sum_e d_e [C_e] = beta."""
    beta = tuple(int(x) for x in beta)
    if any(x < 0 for x in beta):
        raise InfeasibleClass(f"class {beta} is not effective")
    edges = [e for e in P.compact_edges() if e.id in P.classes]
    for e in edges:
        if len(P.classes[e.id]) != len(beta):
            raise InfeasibleClass(f"class {beta} has wrong rank")
        if not any(P.classes[e.id]):
            raise InfeasibleClass(f"edge {e.id} has zero class")
    out = []

    def rec(i, rem, acc):
        if i == len(edges):
            if not any(rem):
                out.append(dict(acc))
            return
        c = P.classes[edges[i].id]
        k = 0
        while all(r - k * x >= 0 for r, x in zip(rem, c)):
            acc[edges[i].id] = k
            rec(i + 1, tuple(r - k * x for r, x in zip(rem, c)), acc)
            k += 1
            if not any(c):
                break
        acc.pop(edges[i].id, None)

    rec(0, beta, {})
    if not out:
        raise InfeasibleClass(f"class {beta} is not a nonnegative combination of edge classes")
    return out


def enumerate_markings(P: ToricPolytope, beta: Sequence[int], box_budget: int | None = None,
                       standard: bool = False) -> Iterator[CappedMarking]:
    """Balanced half-edge assignments in class beta (standard: one partition per edge)."""
    for degs in edge_degrees(P, beta):
        if box_budget is not None and sum(degs.values()) > box_budget:
            continue
        slots = []
        for e in P.compact_edges():
            d = degs.get(e.id, 0)
            if standard:
                slots.append([((e.id, 0), lam) for lam in partitions_of(d)])
            else:
                slots.append([((e.id, 0), l0, (e.id, 1), l1) for l0 in partitions_of(d) for l1 in partitions_of(d)])
        for combo in itertools.product(*slots):
            assign = []
            for item in combo:
                assign.append((item[0], item[1]))
                if not standard:
                    assign.append((item[2], item[3]))
            yield CappedMarking(tuple(sorted(assign, key=lambda x: x[0])))


# ---------------------------------------------------------------------------
# insertions


@dataclass(frozen=True)
class InsertionClass:
    restrictions: tuple[tuple[str, ExactScalar], ...]

    @classmethod
    def point_class(cls, P: ToricPolytope, v: str) -> "InsertionClass":
        t = local_weights(P, v)
        return cls(((v, t[0] * t[1] * t[2]),))

    def at(self, v: str) -> ExactScalar:
        return dict(self.restrictions).get(v, ZERO)


def _half_edge_partition(P: ToricPolytope, marking: CappedMarking, v: str, standard: bool):
    """Leg triple at v in the vertex's own axis order (with orientation transposes)."""
    legs = [EMPTY, EMPTY, EMPTY]
    for e, k in P.vertex_edges(v):
        if not e.compact:
            continue
        lam = marking.get(e.id, 0 if standard else k)
        p, r, ax = e.axis_map[k]
        if (p, r) != LEG_FRAME[ax]:
            lam = transpose(lam)
        legs[ax] = lam
    return tuple(legs)


def insertion_factor(P: ToricPolytope, marking: CappedMarking, insertions: Sequence[InsertionClass],
                     standard: bool = False) -> ExactScalar:
    out = ONE
    for gamma in insertions:
        acc = ZERO
        for v in P.vertices:
            g = gamma.at(v)
            if not g:
                continue
            t = local_weights(P, v)
            legs = _half_edge_partition(P, marking, v, standard)
            acc = acc + g * sum((scalar(legs[i].size) / t[i] for i in range(3)), ZERO)
        out = out * acc
    return out


# ---------------------------------------------------------------------------
# standard assembly


def _zero_series(order) -> QSeries:
    return QSeries.from_q_dict({}, order)


def degree_zero_series(P: ToricPolytope, cutoff: int) -> QSeries:
    out = QSeries.one(cutoff)
    for v, frame in P.vertices.items():
        out = out * vx.dt_vertex_series((EMPTY, EMPTY, EMPTY), frame, cutoff)
    return out


def assemble_standard_dt(P: ToricPolytope, beta: Sequence[int], insertions: Sequence[InsertionClass] = (),
                         cutoff: int = 4, reduced: bool = False) -> QSeries:
    """Unreduced (or reduced) localization sum through q^cutoff."""
    total = None
    cache: dict = {}
    for marking in enumerate_markings(P, beta, standard=True):
        term_ins = insertion_factor(P, marking, insertions, standard=True)
        if insertions and not term_ins:
            continue
        weight = term_ins
        qexp = 0
        for e in P.compact_edges():
            lam = marking.get(e.id, 0)
            if not lam:
                continue
            frame = P.vertices[e.ends[0]]
            m = e.axis_map[0]
            w, chi = vx.edge_weight_dt(lam, e.ab[0], e.ab[1], (frame[m[0]], frame[m[1]], frame[m[2]]))
            weight = weight * w
            qexp += chi
        # vertex series need cutoff - qexp (shifted) precision; compute at full cutoff
        series = None
        for v, frame in P.vertices.items():
            legs = _half_edge_partition(P, marking, v, True)
            key = (v, legs)
            if key not in cache:
                lo = minimal_volume(legs)
                cache[key] = vx.dt_vertex_series(legs, frame, max(cutoff - qexp + _budget_slack(P, marking, v), lo))
            series = cache[key] if series is None else series * cache[key]
        term = series.shift(2 * qexp) * weight
        total = term if total is None else total + term
    if total is None:
        total = _zero_series(cutoff)
    total = total.truncate(2 * cutoff) if total.truncation_order > 2 * cutoff else total
    if reduced:
        total = total * degree_zero_series(P, cutoff).inverse()
    return total


def _budget_slack(P: ToricPolytope, marking: CappedMarking, v: str) -> int:
    """Extra precision so the product of vertex series is exact through the cutoff.

    Other vertices' series start at their (possibly negative) minimal volume.
    """
    slack = 0
    for w in P.vertices:
        if w != v:
            slack -= min(0, minimal_volume(_half_edge_partition(P, marking, w, True)))
    return slack


# ---------------------------------------------------------------------------
# capped assembly


CappedData = Mapping[str, Callable]


def assemble_capped_dt(P: ToricPolytope, beta: Sequence[int], insertions: Sequence[InsertionClass],
                       capped_data: CappedData):
    """Sum over capped markings of I * prod C * prod E * prod G.

    capped_data["vertex"](v, legs) and capped_data["edge"](edge, lam0, lam1)
    return unstarred capped values (ExactScalar or QSeries); a missing datum
    is reported by raising MissingCappedDatum from the callable or here.
    """
    total = None
    for marking in enumerate_markings(P, beta):
        term = insertion_factor(P, marking, insertions)
        if insertions and not term:
            continue
        for v in P.vertices:
            legs = _half_edge_partition(P, marking, v, False)
            c = _lookup(capped_data, "vertex", v, legs)
            term = term * c
            t = local_weights(P, v)
            for ax in range(3):
                if legs[ax]:
                    g, qe = gluing_factor_dt(legs[ax], t, ax)
                    term = term * g * (Q ** qe if not isinstance(term, QSeries) else ONE)
                    if isinstance(term, QSeries):
                        term = term.shift(2 * qe)
        for e in P.compact_edges():
            l0, l1 = marking.get(e.id, 0), marking.get(e.id, 1)
            if l0:
                term = term * _lookup(capped_data, "edge", e, l0, l1)
        total = term if total is None else total + term
    return ZERO if total is None else total


def _lookup(data, kind, *args):
    if kind not in data:
        raise MissingCappedDatum(f"no {kind} data supplied")
    return data[kind](*args)


# ---------------------------------------------------------------------------
# degree zero


def degree0_exponent(P: ToricPolytope) -> ExactScalar:
    total = ZERO
    for v in P.vertices:
        t = local_weights(P, v)
        s = t[0] + t[1] + t[2]
        total = total + (t[0] - s) * (t[1] - s) * (t[2] - s) / (t[0] * t[1] * t[2])
    return total


def c3_polytope() -> ToricPolytope:
    return ToricPolytope.from_dict({
        "vertices": [{"id": "v0", "weights": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}],
        "edges": [{"id": f"o{i}", "ends": ["v0", None], "axis_map": [list(LEG_FRAME[i]) + [i]]} for i in range(3)],
    })


def local_p1(a: int, b: int) -> ToricPolytope:
    """Total space of O(a) + O(b) over P^1 with standard weights at the 0-end."""
    v1 = [[1, 0, -a], [0, 1, -b], [0, 0, -1]]
    return ToricPolytope.from_dict({
        "vertices": [{"id": "v0", "weights": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]},
                     {"id": "v1", "weights": v1}],
        "edges": [
            {"id": "e", "ends": ["v0", "v1"], "ab": [a, b], "axis_map": [[0, 1, 2], [0, 1, 2]]},
            {"id": "o0", "ends": ["v0", None], "axis_map": [[1, 2, 0]]},
            {"id": "o1", "ends": ["v0", None], "axis_map": [[2, 0, 1]]},
            {"id": "o2", "ends": ["v1", None], "axis_map": [[1, 2, 0]]},
            {"id": "o3", "ends": ["v1", None], "axis_map": [[2, 0, 1]]},
        ],
        "classes": {"e": [1]},
    })


# ---------------------------------------------------------------------------
# GW/DT correspondence


class _GSeries:
    """Truncated Laurent series in u with coefficients a + b i, a, b in the t-field."""

    def __init__(self, offset: int, re: list, im: list, order: int):
        self.offset, self.re, self.im, self.order = offset, re, im, order

    @classmethod
    def exp_iu(cls, k: Fraction, order: int) -> "_GSeries":
        """e^{i k u} through u^order."""
        re, im = [], []
        for n in range(order + 1):
            c = scalar(Fraction(k) ** n / math.factorial(n))
            if n % 4 == 0:
                re.append(c); im.append(ZERO)
            elif n % 4 == 1:
                re.append(ZERO); im.append(c)
            elif n % 4 == 2:
                re.append(-c); im.append(ZERO)
            else:
                re.append(ZERO); im.append(-c)
        return cls(0, re, im, order)

    def __add__(self, o):
        off = min(self.offset, o.offset)
        order = min(self.order, o.order)
        n = order - off + 1
        re = [self._get(self.re, self.offset, off + i) + o._get(o.re, o.offset, off + i) for i in range(n)]
        im = [self._get(self.im, self.offset, off + i) + o._get(o.im, o.offset, off + i) for i in range(n)]
        return _GSeries(off, re, im, order)

    @staticmethod
    def _get(lst, off, k):
        i = k - off
        return lst[i] if 0 <= i < len(lst) else ZERO

    def scale(self, c: ExactScalar) -> "_GSeries":
        return _GSeries(self.offset, [x * c for x in self.re], [x * c for x in self.im], self.order)

    def __mul__(self, o):
        off = self.offset + o.offset
        order = min(self.order + o.offset, o.order + self.offset)
        n = order - off + 1
        re, im = [ZERO] * n, [ZERO] * n
        for i, (a, b) in enumerate(zip(self.re, self.im)):
            for j, (c, d) in enumerate(zip(o.re, o.im)):
                if i + j < n:
                    re[i + j] = re[i + j] + a * c - b * d
                    im[i + j] = im[i + j] + a * d + b * c
        return _GSeries(off, re, im, order)

    def normalize(self) -> "_GSeries":
        k = 0
        while k < len(self.re) and not self.re[k] and not self.im[k]:
            k += 1
        return _GSeries(self.offset + k, self.re[k:], self.im[k:], self.order)

    def inverse(self) -> "_GSeries":
        s = self.normalize()
        if not s.re:
            raise ZeroDivisionError("series vanishes to its truncation order")
        a, b = s.re[0], s.im[0]
        nrm = a * a + b * b
        inv0 = (a / nrm, -b / nrm)
        n = s.order - s.offset + 1
        re, im = [inv0[0]], [inv0[1]]
        for m in range(1, n):
            sr, si = ZERO, ZERO
            for k in range(1, m + 1):
                if k < len(s.re):
                    sr = sr + s.re[k] * re[m - k] - s.im[k] * im[m - k]
                    si = si + s.re[k] * im[m - k] + s.im[k] * re[m - k]
            re.append(-(sr * inv0[0] - si * inv0[1]))
            im.append(-(sr * inv0[1] + si * inv0[0]))
        return _GSeries(-s.offset, re, im, -s.offset + n - 1)


def _x_poly_series(coeffs: dict[Fraction, ExactScalar], order: int) -> _GSeries:
    """sum c_k x^k with x = e^{iu}."""
    out = _GSeries(0, [ZERO] * (order + 1), [ZERO] * (order + 1), order)
    for k, c in coeffs.items():
        out = out + _GSeries.exp_iu(k, order).scale(c)
    return out


def _q_laurent_coeffs(p: ExactScalar) -> dict[Fraction, ExactScalar]:
    """Polynomial in qh -> {q-power: t-coefficient}."""
    from .exactalg import _qh_coefficients
    return {Fraction(int(k), 2): ExactScalar(c, ONE.den) for k, c in _qh_coefficients(p.num).items()}


def correspondence_transform(Z: ExactScalar, delta: int = 0, ell_shift: int = 0, order: int = 6) -> QSeries:
    """u-expansion of (-q)^{-delta/2} Z at q = -e^{iu}, divided by (-iu)^{delta + ell_shift}.

    Returns a QSeries in the variable u (integer powers) through u^order.
    """
    Z = scalar(Z)
    num = _q_laurent_coeffs(ExactScalar(Z.num, ONE.den))
    den = _q_laurent_coeffs(ExactScalar(Z.den, ONE.den))
    # with q = -x: q^k = (-1)^k x^k (k may be half-integral: (-q)^{1/2} = x^{1/2})
    def to_x(coeffs):
        out = {}
        for k, c in coeffs.items():
            if k.denominator != 1:
                raise ValueError("half-integral q powers need an explicit (-q)^{1/2} branch; pass them via delta")
            out[k] = c * (-1) ** int(k)
        return out
    work = order + 2 * (sum(1 for _ in den) + 4) + abs(delta) + abs(ell_shift) + 4
    N = _x_poly_series(to_x(num), work)
    D = _x_poly_series(to_x(den), work)
    S = N * D.inverse()
    S = S * _GSeries.exp_iu(Fraction(-delta, 2), work)
    p = delta + ell_shift
    # divide by (-i u)^p : (-i)^{-p} = i^p
    c = [(ONE, ZERO), (ZERO, ONE), (-ONE, ZERO), (ZERO, -ONE)][p % 4]
    S = S * _GSeries(0, [c[0]], [c[1]], work)
    S = _GSeries(S.offset - p, S.re, S.im, S.order - p)
    S = S.normalize() if S.re else S
    terms = {}
    for i, (a, b) in enumerate(zip(S.re, S.im)):
        k = S.offset + i
        if k > order:
            break
        if b:
            raise ResidualImaginary(f"u^{k} coefficient has imaginary part {b}")
        if a:
            terms[k] = a
    if S.order < order:
        raise ArithmeticError("insufficient working precision")
    return QSeries.from_q_dict(terms, order)


def inverse_sine_square(order: int) -> QSeries:
    """u-series of 1/(2 sin(u/2))^2 built from 2 - 2 cos u with rational coefficients."""
    # 2 - 2cos u = u^2 * sum_{n>=0} 2 (-1)^n u^{2n} / (2n+2)!
    m = order + 2
    base = [Fraction(0)] * (m + 1)
    for n in range(0, m // 2 + 1):
        if 2 * n <= m:
            base[2 * n] = Fraction(2 * (-1) ** n, math.factorial(2 * n + 2))
    inv = [Fraction(0)] * (m + 1)
    inv[0] = 1 / base[0]
    for k in range(1, m + 1):
        inv[k] = -sum(base[j] * inv[k - j] for j in range(1, k + 1)) / base[0]
    return QSeries.from_q_dict({k - 2: scalar(inv[k]) for k in range(m + 1) if k - 2 <= order and inv[k]}, order)


# ---------------------------------------------------------------------------
# degeneration


@dataclass
class DegenerationReport:
    residuals: dict
    ok: bool


def degeneration_check(left: Mapping, right: Mapping, d: int, glued=None) -> DegenerationReport:
    """Compare sum_mu Z(X1|mu) (-1)^{|mu|-l} z(mu) q^{-|mu|} Z(X2|mu^dual) with the glued value.

    left/right map Partition -> value; glued may be a value or None (then
    the report only carries the per-mu terms).  Values may be ExactScalars or
    GradedOperator-like matrices given as dicts.
    """
    terms = {}
    total = ZERO
    for mu, coeff, dual in coproduct_one(d):
        lam = mu.underlying()
        t = scalar(left[lam]) * coeff * Q ** (-d) * scalar(right[dual.underlying()])
        terms[lam] = t
        total = total + t
    residuals = {}
    if glued is not None:
        residuals["total"] = scalar(glued) - total
    return DegenerationReport(residuals, all(not r for r in residuals.values()))
