import io
import json
import os
import subprocess
import sys

import pytest

from randbell import cli, lcd_lp, montecarlo


def run(*argv, env=None):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_missing_n_is_a_usage_error():
    code, out, err = run("estimate")
    assert code == cli.EXIT_USAGE and out == ""
    assert "usage:" in err and "--n" in err


@pytest.mark.parametrize("argv", [
    ["estimate", "--n", "7", "--criteria", "lp"],
    ["estimate", "--n", "2", "--mode", "diagonal"],
    ["estimate", "--n", "2", "--state", "werner"],
    ["estimate", "--n", "2", "--trials", "0"],
    ["estimate", "--n", "3", "--state", "random-pure"],
    ["bogus"],
    ["entanglement-sweep", "--thetas", "a,b"],
])
def test_bad_invocations_exit_2(argv):
    assert run(*argv)[0] == cli.EXIT_USAGE


def test_lp_limit_can_be_raised_only_explicitly():
    code, out, _ = run("estimate", "--n", "2", "--criteria", "lp", "--trials", "50", "--lp-max-n", "2")
    assert code == 0
    assert run("estimate", "--n", "3", "--criteria", "lp", "--lp-max-n", "2")[0] == cli.EXIT_USAGE


def test_solver_abort_exits_3(monkeypatch):
    def broken(*a, **k):
        raise lcd_lp.SolverError("synthetic")

    monkeypatch.setattr(montecarlo, "decide", broken)
    code, out, err = run("estimate", "--n", "2", "--criteria", "lp", "--trials", "200")
    assert code == cli.EXIT_SOLVER and "aborted" in err and out == ""


def test_csv_and_json_carry_the_same_values():
    argv = ["estimate", "--n", "3", "--criteria", "mabk-orbit,wwzb", "--trials", "3000", "--seed", "8", "--no-timing"]
    _, csv_text, _ = run(*argv)
    _, json_text, _ = run(*argv, "--format", "json")
    rows_csv = cli.parse_csv(csv_text)
    rows_json = json.loads(json_text)
    assert len(rows_csv) == len(rows_json) == 2
    assert list(rows_csv[0])[: len(cli.RECORD_FIELDS)] == list(cli.RECORD_FIELDS)
    for a, b in zip(rows_csv, rows_json):
        for key in cli.RECORD_FIELDS:
            if b[key] is None:
                assert a[key] == ""
            elif isinstance(b[key], float):
                assert float(a[key]) == b[key]
            else:
                assert a[key] == str(b[key])


def test_timing_present_unless_suppressed():
    _, text, _ = run("estimate", "--n", "2", "--trials", "100", "--format", "json")
    assert json.loads(text)[0]["wall_time_seconds"] > 0


def test_flag_beats_config_beats_default(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"trials": 123, "seed": 5, "mode": "rom"}))
    _, text, _ = run("estimate", "--n", "2", "--config", str(cfg), "--format", "json")
    rec = json.loads(text)[0]
    assert (rec["trials"], rec["master_seed"], rec["mode"]) == (123, 5, "rom")
    _, text, _ = run("estimate", "--n", "2", "--config", str(cfg), "--trials", "77", "--format", "json")
    rec = json.loads(text)[0]
    assert (rec["trials"], rec["master_seed"]) == (77, 5)
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert run("estimate", "--n", "2", "--config", str(cfg))[0] == cli.EXIT_USAGE
    assert run("estimate", "--n", "2", "--config", str(tmp_path / "missing.json"))[0] == cli.EXIT_USAGE


def test_threads_environment_variable(monkeypatch):
    monkeypatch.setenv(montecarlo.THREADS_ENV, "4")
    ns = cli.build_parser().parse_args(["estimate", "--n", "2"])
    assert cli.resolve_settings(ns)["threads"] == 4
    monkeypatch.setenv(montecarlo.THREADS_ENV, "zero")
    assert run("estimate", "--n", "2", "--trials", "10")[0] == cli.EXIT_USAGE


def test_output_file(tmp_path):
    dest = tmp_path / "out.csv"
    code, out, _ = run("estimate", "--n", "2", "--trials", "100", "--output", str(dest), "--no-timing")
    assert code == 0 and out == ""
    assert cli.parse_csv(dest.read_text())[0]["trials"] == "100"


def test_table1_shape():
    code, text, _ = run("table1", "--trials", "20", "--format", "json", "--no-timing")
    rows = json.loads(text)
    assert code == 0 and len(rows) == 10
    assert {(r["mode"], r["n"]) for r in rows} == set(cli.TABLE1_REFERENCE)
    assert all(r["criterion"] == "lp" for r in rows)
    assert [r["trials"] for r in rows if r["n"] == 6] == [2, 2]
    assert rows[0]["reference"] == cli.TABLE1_REFERENCE[("rim", 2)]


def test_table1_trial_rule():
    assert cli.table1_trials(5, 100_000, 1.0) == 100_000
    assert cli.table1_trials(6, 100_000, 1.0) == 10_000
    assert cli.table1_trials(3, 100_000, 0.01) == 1000


def test_other_commands():
    code, text, _ = run("figure1", "--nmax", "4", "--trials", "200", "--format", "json")
    assert code == 0 and len(json.loads(text)) == 2 * 3 * 2
    code, text, _ = run("mabk-single", "--nmax", "3", "--trials", "2000", "--modes", "rim", "--format", "json")
    rows = json.loads(text)
    assert len(rows) == 2 and rows[0]["mean_violation_classical"] > 1
    code, text, _ = run("entanglement-sweep", "--points", "3", "--trials", "500", "--format", "json")
    rows = json.loads(text)
    assert len(rows) == 6 and rows[0]["theta"] == 0.0 and rows[0]["p_hat"] == 0.0
    code, text, _ = run("random-state", "--trials", "500", "--format", "json")
    assert [r["mode"] for r in json.loads(text)] == ["rim", "rom"]


def test_analytic_command():
    code, text, _ = run("analytic", "--format", "json")
    rows = json.loads(text)
    assert code == 0 and [r["quantity"] for r in rows] == ["chsh-single-rim", "chsh-orbit-rim"]
    assert all(r["abs_difference"] < 1e-9 for r in rows)


def test_repeatable_across_threads():
    argv = ["figure1", "--nmax", "5", "--trials", "5000", "--seed", "3", "--no-timing"]
    outs = {run(*argv, "--threads", str(t))[1] for t in (1, 4, 8)}
    assert len(outs) == 1


def test_module_entry_point_and_numpy_fallback():
    env = dict(os.environ, RANDBELL_DISABLE_NUMBA="1")
    argv = [sys.executable, "-m", "randbell", "estimate", "--n", "3", "--criteria", "mabk-orbit,wwzb,lp",
            "--trials", "60", "--seed", "2", "--no-timing"]
    slow = subprocess.run(argv, env=env, capture_output=True, text=True, check=True).stdout
    fast = subprocess.run(argv[:], capture_output=True, text=True, check=True).stdout
    assert slow == fast
    probe = subprocess.run([sys.executable, "-c", "from randbell import _accel; print(_accel.USE_NUMBA)"],
                           env=env, capture_output=True, text=True, check=True).stdout
    assert probe.strip() == "False"
