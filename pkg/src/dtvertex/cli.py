"""Command-line entry point: ``dtvertex <command> ...``.

Exit codes: 0 success, 2 validation error, 3 computation error, 4 missing
external data.  Errors are reported on stderr as one JSON record.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import capping as cp
from . import toric
from . import vertex as vx
from .exactalg import (
    AmbiguousFit, ExactAlgError, ExactScalar, NoFit, QSeries, rational_reconstruct, substitute_cy,
)
from .partitions import EMPTY, CutoffBelowMinimum, Partition, minimal_volume, partitions_of

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION, EXIT_MISSING = 0, 2, 3, 4

VALIDATION_ERRORS = (toric.PolytopeError, toric.InfeasibleClass, CutoffBelowMinimum, ValueError, OSError)
MISSING_ERRORS = (cp.MissingExternalData, toric.MissingCappedDatum)


class UsageError(ValueError):
    code = "InvalidArgument"


# ---------------------------------------------------------------------------
# parsing helpers


def parse_legs(text: str, count: int = 3) -> tuple[Partition, ...]:
    """'[2,1];[1];[]' -> partitions; missing trailing legs are empty."""
    items = [x.strip() for x in text.split(";")] if text.strip() else []
    if len(items) > count:
        raise UsageError(f"expected at most {count} legs, got {len(items)}")
    try:
        legs = [Partition.parse(x) if x else EMPTY for x in items]
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad partition list {text!r}: {exc}") from exc
    return tuple(legs + [EMPTY] * (count - len(legs)))


def parse_ints(text: str, what: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"bad {what} {text!r}") from exc
    return vals


def reconstruct_small(s: QSeries, extra: int = 2) -> ExactScalar | None:
    """Lowest total-degree rational fit leaving `extra` coefficients as checks."""
    v = s.valuation()
    if v is None:
        return ExactScalar(0)
    known = (s.truncation_order - v) // 2 + 1
    for total in range(known - extra):
        for den in range(total + 1):
            num = total - den + max(v // 2, 0)
            try:
                return rational_reconstruct(s, num, den)
            except (NoFit, AmbiguousFit):
                continue
    return None


# ---------------------------------------------------------------------------
# commands; each returns a dict rendered by `render`


def cmd_vertex(args) -> dict:
    legs = parse_legs(args.legs)
    s = vx.dt_vertex_series(legs, vx.STANDARD_WEIGHTS, args.cutoff)
    if args.cy:
        s = s.map(substitute_cy)
    return {"command": "vertex", "legs": [str(l) for l in legs], "cutoff": args.cutoff,
            "series": s.serialize()}


def cmd_edge(args) -> dict:
    a, b = parse_ints(args.ab, "edge degrees")
    grade = args.grade
    op = cp.edge_operator_from_ode(a, b, grade, args.order)
    blocks = {}
    for d in range(1, grade + 1):
        basis = partitions_of(d)
        blocks[str(d)] = {"basis": [str(p) for p in basis],
                          "matrix": [[x.serialize() for x in row] for row in op.blocks.blocks[d]]}
    return {"command": "edge", "ab": [a, b], "order": args.order, "blocks": blocks}


def _beta(args, P: toric.ToricPolytope) -> tuple[int, ...]:
    if args.cls is None:
        raise UsageError("--class is required")
    beta = parse_ints(args.cls, "curve class")
    if any(x < 0 for x in beta):
        raise UsageError("curve class coordinates must be nonnegative")
    return beta


def cmd_assemble(args) -> dict:
    P = toric.ToricPolytope.load(args.input)
    beta = _beta(args, P)
    s = toric.assemble_standard_dt(P, beta, (), args.cutoff, reduced=True)
    fit = reconstruct_small(s)
    return {"command": "assemble", "input": Path(args.input).name, "class": list(beta), "cutoff": args.cutoff,
            "series": s.serialize(), "rational": fit.serialize() if fit is not None else None}


def cmd_capped(args) -> dict:
    legs = parse_legs(args.legs)
    c = cp.capped_vertex(legs)
    if args.cy:
        c = substitute_cy(c)
    return {"command": "capped", "legs": [str(l) for l in legs], "starred": c.serialize()}


def cmd_transform(args) -> dict:
    try:
        Z = ExactScalar.parse(args.expr)
    except Exception as exc:  # parser raises on any malformed input
        raise UsageError(f"cannot parse {args.expr!r}: {exc}") from exc
    u = toric.correspondence_transform(Z, args.delta, args.ell_shift, args.order)
    return {"command": "transform", "input": args.expr, "order": args.order, "u_series": u.serialize()}


TIER1 = [(Partition.of(*p), EMPTY, EMPTY) for p in [(1,), (2,), (1, 1), (3,), (2, 1), (1, 1, 1)]] + \
        [(Partition.of(*p), Partition.of(1), EMPTY) for p in [(1,), (2,), (1, 1)]]
TIER2 = [(Partition.of(1, 1), Partition.of(1, 1), EMPTY), (Partition.of(1, 1), Partition.of(2), EMPTY),
         (Partition.of(2), Partition.of(2), EMPTY), (Partition.of(1), Partition.of(1), Partition.of(1)),
         (Partition.of(2), Partition.of(1), Partition.of(1)), (Partition.of(1, 1), Partition.of(1), Partition.of(1))]


def r_table(rows) -> dict:
    table = cp.compute_table(rows)
    conn = cp.connected_part(table)
    return {k: cp.r_normalize(conn[k], *k, symmetric=True) for k in rows}


def cmd_table(args) -> dict:
    ext = cp.ExternalOperatorData.load(args.ext_data) if args.ext_data else None
    if ext is not None:
        grade = min(ext.grade_bound, 2)
        fam = cp.capped_rubber_reconstruct(ext, ext.novikov_bound, grade)
        if cp.rubber_residual(ext, fam, grade):
            raise cp.InconsistentSystem("external rubber data fails its recursion")
    out = []
    for k, r in r_table(TIER1).items():
        out.append({"legs": [str(x) for x in k], "R": r.serialize()})
    if ext is not None:
        for k, r in r_table(TIER2).items():
            out.append({"legs": [str(x) for x in k], "R": r.serialize()})
    else:
        for k in TIER2:
            out.append({"legs": [str(x) for x in k], "R": None, "status": "requires external operator data"})
    return {"command": "table", "rows": out}


def cmd_selftest(args) -> dict:
    from .fock import macmahon_power
    from .partitions import enumerate_legged
    checks = {}
    counts = {}
    for c in enumerate_legged((EMPTY, EMPTY, EMPTY), 6):
        counts[c.renormalized_volume] = counts.get(c.renormalized_volume, 0) + 1
    mac = macmahon_power(ExactScalar(1), 6, sign=1)
    checks["macmahon"] = all(mac.coeff(n) == counts.get(n, 0) for n in range(7))
    tube = cp.tube_matrix(1)
    checks["tube_identity_d1"] = tube[0][0] == QSeries.one(3)
    conifold = toric.assemble_standard_dt(toric.local_p1(-1, -1), [1], (), 5, reduced=True)
    checks["conifold_degree1"] = [conifold.coeff(n) for n in range(1, 6)] == [1, -2, 3, -4, 5]
    return {"command": "selftest", "checks": checks, "ok": all(checks.values())}


COMMANDS = {"vertex": cmd_vertex, "edge": cmd_edge, "assemble": cmd_assemble, "capped": cmd_capped,
            "transform": cmd_transform, "table": cmd_table, "selftest": cmd_selftest}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtvertex", description="Equivariant DT vertex and capped-vertex computations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--cutoff", type=int, default=4, help="q-order / box budget (default 4)")
    common.add_argument("--class", dest="cls", default=None, help="curve class, comma separated")
    common.add_argument("--cy", action="store_true", help="specialize t1+t2+t3=0")
    common.add_argument("--order", type=int, default=6, help="series order for ODEs and transforms (default 6)")
    common.add_argument("--ext-data", dest="ext_data", default=None, help="external operator data file")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--format", choices=("text", "json"), default="text")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("vertex", parents=[common], help="box-counting vertex series")
    s.add_argument("legs", help="legs as '[2,1];[1];[]'")
    s = sub.add_parser("edge", parents=[common], help="capped edge operator from the ODE")
    s.add_argument("ab", help="normal degrees 'a,b'")
    s.add_argument("grade", type=int, help="maximal energy grade")
    s = sub.add_parser("assemble", parents=[common], help="reduced localization sum of a polytope")
    s.add_argument("input", help="polytope JSON file")
    s = sub.add_parser("capped", parents=[common], help="starred capped vertex")
    s.add_argument("legs")
    s = sub.add_parser("transform", parents=[common], help="DT -> GW variable change")
    s.add_argument("expr", help="rational function of q, e.g. 'q/(1+q)^2'")
    s.add_argument("delta", nargs="?", type=int, default=0)
    s.add_argument("ell_shift", nargs="?", type=int, default=0)
    sub.add_parser("table", parents=[common], help="R-normalized capped vertices")
    sub.add_parser("selftest", parents=[common], help="quick internal consistency checks")
    return p


def render(result: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(result, indent=1, sort_keys=True) + "\n"
    lines = []

    def walk(prefix, val):
        if isinstance(val, dict):
            for k in val:
                walk(f"{prefix}{k}.", val[k])
        elif isinstance(val, list) and val and isinstance(val[0], dict):
            for i, item in enumerate(val):
                walk(f"{prefix}{i}.", item)
        else:
            lines.append(f"{prefix[:-1]}: {val}")

    walk("", result)
    return "\n".join(lines) + "\n"


def _error(code: str, detail: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": code, "detail": detail}, sort_keys=True) + "\n")
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    if args.cutoff < 0 or args.order < 0:
        return _error("InvalidArgument", "cutoff and order must be nonnegative", EXIT_VALIDATION)
    try:
        result = COMMANDS[args.command](args)
    except MISSING_ERRORS as exc:
        return _error(getattr(exc, "code", type(exc).__name__), str(exc), EXIT_MISSING)
    except (cp.CappingError, ExactAlgError, vx.VertexError, toric.ResidualImaginary) as exc:
        return _error(getattr(exc, "code", type(exc).__name__), str(exc), EXIT_COMPUTATION)
    except VALIDATION_ERRORS as exc:
        return _error(getattr(exc, "code", type(exc).__name__), str(exc), EXIT_VALIDATION)
    text = render(result, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.command == "selftest" and not result["ok"]:
        return EXIT_COMPUTATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
