import json
import math
import os
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwre.cli import main, run
from brwre.config import ExperimentConfig, dump_config, parse_config
from brwre.errors import ConfigError

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def cfg_path(name):
    return os.path.join(CONFIGS, name)


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def data_lines(path):
    return [ln for ln in open(path).read().splitlines() if not ln.startswith("#")]


finite = st.floats(min_value=1e-300, max_value=1e300, allow_nan=False, allow_infinity=False)


@settings(max_examples=60)
@given(rhos=st.lists(finite, min_size=2, max_size=2), p=finite, seed=st.integers(0, 2**63),
       grid=st.one_of(st.none(), st.lists(st.integers(1, 100), min_size=1, max_size=5)))
def test_config_round_trip(rhos, p, seed, grid):
    cfg = ExperimentConfig(edges=[(0, 1, rhos[0]), (1, 0, rhos[1])],
                           spatial=[[p, 1.0 - p], [0.25, 0.75]], seed=seed, n_grid=grid,
                           matrix=[[p, 2.0], [3.0, 0.0]])
    back = parse_config(dump_config(cfg))
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)


@pytest.mark.parametrize("text, match", [
    ("[edges]\n0 1\n", "i j rho"),
    ("[nodes]\n", "unknown section"),
    ("0 1 1.0\n", "before the first section"),
    ("[edges]\n0 0 1\n[run]\nfoo = 1\n", "unknown run setting"),
    ("[edges]\n0 0 1\n[run]\nn = x\n", "integer"),
    ("[edges]\n0 0 1\n[spatial]\n1 0\n", "square"),
    ("[run]\nn = 1\n", "no \\[edges\\]"),
    ("[edges]\n0 0 1\n[edges]\n", "repeated"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_validate_prints_girth_and_lambda(capsys):
    assert main(["validate", cfg_path("two_cycle.cfg"), "--no-timestamp"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "girth=2" in out and "lambda=1" in out


def test_lambda_uniform_reports_all_cycles(tmp_path, capsys):
    assert main(["lambda", cfg_path("uniform_complete.cfg"), "--out", str(tmp_path)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["lambda"] == 1.5
    assert rec["num_optimal"] == rec["num_cycles"] == 8
    assert set(rec) >= {"lambda", "cycles", "chi", "restarts", "objective_trace_path"}
    assert json.loads((tmp_path / "lambda.jsonl").read_text()) == rec


def test_unknown_command_exits_2_with_usage(capsys):
    assert main(["explode", "x.cfg"]) == 2
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize("text, name", [
    ("[edges]\n0 1 1\n0 1 1\n1 0 1\n", "DuplicateEdge"),
    ("[edges]\n0 1 1\n", "DanglingType"),
    ("[edges]\n0 1 1\n1 0 1\n[spatial]\n1 0\n0 1\n", "NotIrreducible"),
    ("[edges]\n0 1 0\n1 0 1\n", "NonpositiveRho"),
    ("[edges]\n0 1 1\n1 0 1\n[run]\nstart_type = 5\n", "ValidationError"),
])
def test_validation_errors_exit_2(tmp_path, capsys, text, name):
    assert main(["validate", write(tmp_path, text)]) == 2
    err = capsys.readouterr().err
    assert len(err.strip().splitlines()) == 1
    assert name in err


def test_budget_exits_3(tmp_path, capsys):
    path = write(tmp_path, "[edges]\n0 1 1\n1 0 1\n[spatial]\n0.5 0.5\n0.5 0.5\n"
                           "[run]\ndp_budget = 20\n")
    assert main(["anneal", path, "--n-grid", "4,30", "--out", str(tmp_path)]) == 3
    assert "DPBudgetExceeded" in capsys.readouterr().err
    big = "[edges]\n" + "".join(f"{i} {(i + 1) % 13} 1\n" for i in range(13))
    assert main(["chi", write(tmp_path, big, "big.cfg"), "--out", str(tmp_path)]) == 3


def test_default_grid_is_cut_to_feasible_prefix(tmp_path):
    path = write(tmp_path, "[edges]\n0 1 1\n1 0 1\n[spatial]\n0.5 0.5\n0.5 0.5\n"
                           "[run]\ndp_budget = 30\n")
    assert main(["anneal", path, "--out", str(tmp_path)]) == 0
    ns = [int(ln.split(",")[0]) for ln in data_lines(tmp_path / "anneal.csv")[1:]]
    assert ns and ns == [4 * k for k in range(1, len(ns) + 1)] and len(ns) < 10


def test_headers_seed_and_timestamp(tmp_path):
    out = str(tmp_path)
    assert main(["simulate", cfg_path("migration.cfg"), "--num-runs", "20", "--out", out]) == 0
    head = [ln for ln in open(tmp_path / "simulate.csv") if ln.startswith("#")]
    assert "# seed = 3\n" in head
    assert any(ln.startswith("# created = ") for ln in head)
    assert main(["simulate", cfg_path("migration.cfg"), "--num-runs", "20", "--out", out,
                 "--no-timestamp"]) == 0
    assert not any("created" in ln for ln in open(tmp_path / "simulate.csv"))
    assert data_lines(tmp_path / "simulate.csv")[0] == "run,n,total"


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BRWRE_OUTPUT_DIR", str(tmp_path / "envdir"))
    assert main(["expect", cfg_path("migration.cfg"), "--no-timestamp"]) == 0
    assert (tmp_path / "envdir" / "expect.csv").exists()


def test_expect_round_trips_through_environment_csv(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    env = str(tmp_path / "env.csv")
    assert main(["expect", cfg_path("migration.cfg"), "--out", str(a), "--env-out", env]) == 0
    assert main(["expect", cfg_path("migration.cfg"), "--out", str(b), "--env", env]) == 0
    rows = data_lines(a / "expect.csv")
    assert rows == data_lines(b / "expect.csv")
    assert rows[0] == "n,i,x,u_n"
    for ln in rows[1:]:
        val = ln.split(",")[3]
        assert float(format(float(val), ".17g")) == float(val)
        assert float(val) > 0 and not math.isinf(float(val))


def test_simulate_threads_do_not_change_output(tmp_path):
    outs = []
    for threads in ("1", "3"):
        d = tmp_path / threads
        assert main(["simulate", cfg_path("migration.cfg"), "--num-runs", "2500", "--cells",
                     "--threads", threads, "--out", str(d), "--no-timestamp"]) == 0
        outs.append((d / "simulate.csv").read_bytes() + (d / "simulate_cells.csv").read_bytes())
    assert outs[0] == outs[1]


def test_anneal_then_fit(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["anneal", cfg_path("two_cycle.cfg"), "--out", out]) == 0
    assert main(["fit", "--lambda", "1", "--out", out, "--figure"]) == 0
    rows = data_lines(tmp_path / "fit.csv")
    assert rows[0] == "n,r_n"
    r40 = float(rows[-1].split(",")[1])
    assert abs(r40 + math.log(2)) <= 0.1
    assert (tmp_path / "fit.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_fit_needs_lambda_source(tmp_path, capsys):
    assert main(["fit", "--out", str(tmp_path)]) == 2


def test_chi_writes_minimizer_and_trace(tmp_path, capsys):
    assert main(["chi", cfg_path("two_cycle.cfg"), "--restarts", "3", "--out", str(tmp_path)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["chi"] == pytest.approx(math.log(2), abs=1e-6)
    assert rec["chi_closed_form"] == pytest.approx(math.log(2), abs=1e-12)
    assert len(rec["restarts"]) == 3
    nu = data_lines(tmp_path / rec["minimizer_path"])
    assert nu[0] == "i,x,j,y,nu"
    assert sum(float(ln.split(",")[4]) for ln in nu[1:]) == pytest.approx(1.0)
    assert data_lines(tmp_path / rec["objective_trace_path"])[0] == "restart,iteration,objective"


def test_frobenius_command(tmp_path, capsys):
    assert main(["frobenius", cfg_path("frobenius.cfg"), "--out", str(tmp_path)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["mu"] == pytest.approx(math.log((5 + math.sqrt(33)) / 2), abs=1e-12)
    assert rec["gap"] <= 1e-6
    assert main(["frobenius", cfg_path("two_cycle.cfg"), "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "brwre", "validate", cfg_path("two_cycle.cfg")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "girth=2" in proc.stdout


def test_run_wrapper(capsys):
    assert run("validate", cfg_path("two_cycle.cfg")) == 0
    assert "girth=2" in capsys.readouterr().out
