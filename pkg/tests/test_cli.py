import csv
import io
import json

import pytest

from sftmap.cli import BENCH_COLUMNS, EXIT_ERROR, EXIT_NEGATIVE, EXIT_OK, run_cli


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(map(str, argv)), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixtures")
    assert run("fixtures", "--out", d)[0] == EXIT_OK
    return d


def test_solve_fig5(files, tmp_path):
    code, out, _ = run("solve", files / "fig5.json", "--report", tmp_path / "r.json", "--dot", tmp_path / "g.dot")
    assert code == EXIT_OK and "6 placements" in out
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["success"] and len(rep["mapping"]["placements"]) == 6 and rep["violations"] == []
    assert (tmp_path / "g.dot").read_text().startswith("graph ")


def test_solve_fig4(files):
    assert run("solve", files / "fig4.json")[0] == EXIT_OK


def test_solve_infeasible(files):
    code, out, _ = run("solve", files / "infeasible.json", "--report", "-")
    assert code == EXIT_NEGATIVE
    rep = json.loads(out)
    assert not rep["success"] and rep["mapping"]["placements"] == {}


def test_solve_hmax_flag(files):
    code, out, _ = run("solve", files / "fig5.json", "--hmax", 1, "--report", "-")
    assert code in (EXIT_OK, EXIT_NEGATIVE)
    assert json.loads(out)["h_max"] == 1


def test_validate(files):
    code, out, _ = run("validate", files / "fig6.json", files / "fig6-mapping.json")
    assert code == EXIT_NEGATIVE
    assert "ResourceAllocation" in out and "LinkCapacity" in out
    assert run("validate", files / "fig5.json", files / "fig5-mapping.json")[0] == EXIT_OK


def test_oracle(files):
    code, out, _ = run("oracle", files / "fig4.json", "--limit", 1, "--dump")
    assert code == EXIT_OK and "limit reached" in out
    assert run("oracle", files / "infeasible.json")[0] == EXIT_NEGATIVE


def test_gen(tmp_path):
    assert run("gen", "--devices", 9, "--seed", 3, "--profile", "paper", "-o", tmp_path / "g.json")[0] == EXIT_OK
    again = run("gen", "--devices", 9, "--seed", 3, "--profile", "paper")
    assert again[1] == (tmp_path / "g.json").read_text()
    assert run("solve", tmp_path / "g.json")[0] in (EXIT_OK, EXIT_NEGATIVE)
    assert run("gen", "--devices", 40, "--seed", 1, "--profile", "paper")[0] == EXIT_ERROR


def test_bench_csv():
    code, out, err = run("bench", "--seeds", "0..2", "--profile", "paper")
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == BENCH_COLUMNS
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
    assert "/3 scenarios mapped" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["solve"],
        ["solve", "nope.json"],
        ["frobnicate"],
        ["solve", "x.json", "--bogus"],
        ["bench", "--seeds", "5..1"],
        ["gen", "--devices", "0", "--seed", "1"],
    ],
)
def test_errors_exit_1(argv):
    assert run(*argv)[0] == EXIT_ERROR


def test_solve_is_byte_identical(files, tmp_path):
    outs = []
    for i in range(2):
        run("solve", files / "fig5.json", "--report", tmp_path / f"r{i}.json", "--dot", tmp_path / f"g{i}.dot")
        outs.append(((tmp_path / f"r{i}.json").read_bytes(), (tmp_path / f"g{i}.dot").read_bytes()))
    assert outs[0] == outs[1]
