from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from dtvertex import capping as cp
from dtvertex import cli, toric
from dtvertex.exactalg import ExactScalar, Q, QSeries, T2, T3
from dtvertex.partitions import EMPTY, Partition
from dtvertex.vertex import dt_vertex_series

DATA = Path(__file__).resolve().parent.parent / "data" / "conifold.json"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_legs():
    assert cli.parse_legs("[2,1];[1]") == (Partition.of(2, 1), Partition.of(1), EMPTY)
    assert cli.parse_legs("") == (EMPTY, EMPTY, EMPTY)
    with pytest.raises(cli.UsageError):
        cli.parse_legs("[1];[1];[1];[1]")
    with pytest.raises(cli.UsageError):
        cli.parse_legs("[1,2]")


def test_vertex_json(capsys):
    code, out, _ = run(capsys, "vertex", "[1];[]", "--cutoff", "2", "--format", "json")
    assert code == 0
    rec = json.loads(out)
    assert rec["series"] == dt_vertex_series((Partition.of(1), EMPTY, EMPTY), cutoff=2).serialize()


def test_capped(capsys):
    code, out, _ = run(capsys, "capped", "[1];[]", "--format", "json")
    assert code == 0
    assert ExactScalar.parse(json.loads(out)["starred"]) == 1 / (T2 * T3)


def test_transform(capsys):
    code, out, _ = run(capsys, "transform", "q/(1+q)^2", "--order", "4", "--format", "json")
    assert code == 0
    assert json.loads(out)["u_series"] == toric.inverse_sine_square(4).serialize()


def test_assemble_conifold(capsys, tmp_path):
    target = tmp_path / "out.json"
    code, out, _ = run(capsys, "assemble", str(DATA), "--class", "1", "--cutoff", "5",
                       "--format", "json", "--out", str(target))
    assert code == 0 and out == ""
    rec = json.loads(target.read_text())
    assert ExactScalar.parse(rec["rational"]) == Q / (1 + Q) ** 2


def test_edge(capsys):
    code, out, _ = run(capsys, "edge", "0,0", "1", "--order", "2", "--format", "json")
    assert code == 0
    block = json.loads(out)["blocks"]["1"]
    assert block["basis"] == ["[1]"] and block["matrix"] == [[QSeries.one(2).serialize()]]


def test_table_without_external_data(capsys, monkeypatch, tier1_table):
    monkeypatch.setattr(cp, "compute_table", lambda rows, *a, **k: tier1_table)
    code, out, _ = run(capsys, "table", "--format", "json")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert len(rows) == len(cli.TIER1) + len(cli.TIER2)
    assert [r["R"] for r in rows[:6]] == ["1", "0", "0", "0", "0", "0"]
    assert [r["R"] for r in rows[6:9]] == ["t3", "t3", "t3^2"]
    assert all(r["status"] == "requires external operator data" for r in rows[len(cli.TIER1):])


def test_selftest(capsys):
    code, out, _ = run(capsys, "selftest", "--format", "json")
    assert code == 0 and json.loads(out)["ok"]


@pytest.mark.parametrize("argv,code,err", [
    (["vertex", "[x]"], 2, "InvalidArgument"),
    (["assemble", "/nonexistent.json", "--class", "1"], 2, None),
    (["assemble", str(DATA)], 2, "InvalidArgument"),
    (["assemble", str(DATA), "--class", "-1"], 2, "InvalidArgument"),
    (["assemble", str(DATA), "--class", "1,1"], 2, None),
    (["vertex", "[1]", "--cutoff", "-1"], 2, "InvalidArgument"),
    (["table", "--ext-data", "/nonexistent.json"], 4, "MissingExternalData"),
    (["transform", "q/("], 2, "InvalidArgument"),
    (["nosuchcommand"], 2, None),
])
def test_exit_codes(capsys, argv, code, err):
    got, _, stderr = run(capsys, *argv)
    assert got == code
    if err:
        assert json.loads(stderr.strip().splitlines()[-1])["error"] == err


def test_deterministic_under_concurrency():
    cmd = [sys.executable, "-m", "dtvertex.cli", "vertex", "[2,1];[1];[]", "--cutoff", "1", "--format", "json"]
    procs = [subprocess.Popen(cmd, stdout=subprocess.PIPE) for _ in range(3)]
    outs = [p.communicate()[0] for p in procs]
    assert all(p.returncode == 0 for p in procs)
    assert outs[0] == outs[1] == outs[2]
