from __future__ import annotations

import json
import math
import subprocess
import sys

import pytest

from fbai import acceptance
from fbai.cli import build_parser, main
from fbai.montecarlo import results_from_csv


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def _rows(out):
    lines = out.strip().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def test_bounds_example1(capsys):
    code, out, _ = run(["bounds", "--means", "0.9,0.1,0.1", "--algos", "audibert,sr"], capsys)
    assert code == 0
    rows = _rows(out)
    assert float(rows[0]["rate"]) == pytest.approx(0.16)
    assert float(rows[1]["rate"]) == pytest.approx(0.213333, abs=1e-6)


def test_bounds_example2_file(tmp_path, capsys):
    path = tmp_path / "ex2.json"
    path.write_text(json.dumps({"means": [0.95, 0.85, 0.2] + [0.0] * 47}))
    code, out, _ = run(["bounds", "--file", str(path), "--budget", "5000", "--algos", "sr,crc"], capsys)
    assert code == 0
    rows = _rows(out)
    assert float(rows[0]["bound_T5000"]) == pytest.approx(1.93e-3, rel=0.01)
    assert float(rows[1]["bound_T5000"]) == pytest.approx(6.40e-4, rel=0.01)


def test_bounds_trivial_json(capsys):
    code, out, _ = run(["bounds", "--means", "1,0", "--algos", "sr", "--budget", "4", "--format", "json"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload[0]["rate"] == 0.5
    assert payload[0]["bounds"]["4"] == pytest.approx(math.exp(-2))


def test_bounds_family_instance(capsys):
    code, out, _ = run(["bounds", "--family", "one-group", "--k", "3", "--algos", "crc,cra,barrier,sr-kl"], capsys)
    assert code == 0
    assert len(_rows(out)) == 4


@pytest.mark.parametrize(
    "argv",
    [
        ["bounds", "--means", "0.5,0.5"],
        ["bounds", "--means", "0.9,0.1", "--family", "linear", "--k", "3"],
        ["bounds"],
        ["bounds", "--means", "0.9,0.1", "--algos", "ucb"],
        ["bounds", "--file", "/nonexistent/inst.json"],
        ["gen", "--family", "stair", "--k", "3"],
        ["gen", "--family", "linear"],
        ["simulate", "--means", "0.9,0.1", "--algos", "sr", "--budgets", "1"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert "error" in err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bounds", "--means", "0.9,0.1", "--bogus"])
    assert exc.value.code == 2


def test_bad_number_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bounds", "--means", "0.9,abc"])
    assert exc.value.code == 2


def test_gen(capsys):
    code, out, _ = run(["gen", "--family", "linear", "--k", "10"], capsys)
    assert code == 0
    means = json.loads(out)["means"]
    assert means[0] == 0.75 and means[1] == pytest.approx(0.7)
    _, out, _ = run(["gen", "--family", "convex", "--k", "10"], capsys)
    assert json.loads(out)["means"][0] == pytest.approx(0.15)
    _, out, _ = run(["gen", "--family", "one-group", "--k", "2"], capsys)
    assert json.loads(out)["means"] == [0.5, 0.45]


def test_gen_then_bounds(tmp_path, capsys):
    path = tmp_path / "stair.json"
    assert main(["gen", "--family", "stair", "--m", "3", "--out", str(path)]) == 0
    code, out, _ = run(["bounds", "--file", str(path), "--algos", "sr"], capsys)
    assert code == 0 and len(_rows(out)) == 1


def test_simulate_trivial(capsys):
    code, out, _ = run(["simulate", "--means", "1,0,0", "--algos", "sh", "--budgets", "50", "--runs", "100"], capsys)
    assert code == 0
    (result,) = results_from_csv(out)
    assert result.error_rate == 0.0 and result.runs == 100


def test_simulate_stair_rows_and_determinism(tmp_path, capsys):
    argv = ["simulate", "--family", "stair", "--m", "10", "--algos", "sr,crc,cra",
            "--budgets", "3000,4000,5000", "--runs", "200", "--seed", "1"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--out", str(first)]) == 0
    assert main(argv + ["--out", str(second), "--parallelism", "2"]) == 0
    capsys.readouterr()
    assert first.read_bytes() == second.read_bytes()
    results = results_from_csv(first.read_text())
    assert len(results) == 9
    assert {r.family for r in results} == {"stair"}
    assert {r.K for r in results} == {55}


def test_simulate_json(capsys):
    code, out, _ = run(["simulate", "--means", "0.7,0.3", "--algos", "sr,ugape", "--budgets", "20",
                        "--runs", "50", "--format", "json"], capsys)
    assert code == 0
    assert [row["algorithm"] for row in json.loads(out)] == ["SR", "UGapE"]


def test_repro_only_bounds(capsys):
    code, out, _ = run(["repro", "--only", "bounds"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert [line.split()[0] for line in lines[:4]] == ["[PASS]"] * 4
    assert lines[-1].startswith("4/4")


def test_repro_reports_failure_with_exit_1(monkeypatch, capsys):
    monkeypatch.setattr(acceptance, "check_example1", lambda: (False, "forced"))
    code, out, _ = run(["repro", "--only", "bounds"], capsys)
    assert code == 1
    assert "[FAIL] 1." in out


def test_repro_unknown_group(capsys):
    code, _, err = run(["repro", "--only", "everything"], capsys)
    assert code == 2


def test_tolerance_scaling():
    assert acceptance.tolerance_scale(40_000) == 1.0
    assert acceptance.tolerance_scale(4_000) == pytest.approx(math.sqrt(10))
    assert acceptance.tolerance_scale(100_000) == 1.0


def test_help_covers_flags():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    for name, sp in sub.items():
        text = sp.format_help()
        for action in sp._actions:
            for flag in action.option_strings:
                assert flag in text, (name, flag)
            if action.option_strings and action.dest != "help":
                assert action.help, (name, action.dest)
    assert "sqrt(40000/N)" in sub["repro"].format_help()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fbai", "gen", "--family", "one-group", "--k", "2"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["means"] == [0.5, 0.45]
