"""Command-line interface, run in-process through ``main``."""

import json
import subprocess
import sys

import numpy as np
import pytest

from aivlearn.cli import main
from aivlearn.data import load_panel_csv, load_point_csv


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def sim_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "y1a1.csv"
    assert run("simulate", "--dgp", "y1a1", "--n", 1500, "--seed", 3, "--out", p) == 0
    return p


def test_simulate_rows_and_provenance(sim_csv):
    d = load_point_csv(sim_csv)
    assert d.n == 1500
    prov = json.loads(sim_csv.with_name(sim_csv.name + ".provenance.json").read_text())
    assert prov["rows"] == 1500 and prov["provenance"]["seed"] == 3


def test_simulate_latent_columns(tmp_path):
    p = tmp_path / "d.csv"
    assert run("simulate", "--dgp", "y2a2", "--n", 20, "--out", p, "--debug-latents") == 0
    assert "u0" in p.read_text().splitlines()[0].split(",")
    q = tmp_path / "e.csv"
    run("simulate", "--dgp", "y2a2", "--n", 20, "--out", q)
    assert "u0" not in q.read_text().splitlines()[0]


def test_simulate_longitudinal_panel(tmp_path):
    p = tmp_path / "p.csv"
    assert run("simulate", "--dgp", "long-t1", "--n", 50, "--out", p) == 0
    assert load_panel_csv(p).horizon == 1


def test_unknown_dgp_is_usage_error(tmp_path, capsys):
    assert run("simulate", "--dgp", "nope", "--out", tmp_path / "x.csv") == 2
    err = capsys.readouterr().err
    assert err.startswith("error: usage:") and "y1a1" in err
    assert not (tmp_path / "x.csv").exists()


def test_single_fold_rejected(sim_csv, tmp_path, capsys):
    assert run("estimate", "--input", sim_csv, "--folds", 1, "--out", tmp_path / "o.json") == 2
    assert "--folds" in capsys.readouterr().err


def test_estimate_json_schema(sim_csv, tmp_path):
    out = tmp_path / "est.json"
    assert run("estimate", "--input", sim_csv, "--estimator", "fixed", "--weight", "identity:0",
               "--knots", 8, "--out", out) == 0
    d = json.loads(out.read_text())
    for key in ("schema_version", "estimand", "psi_hat", "std_error", "ci_lower", "ci_upper", "n", "provenance"):
        assert key in d
    assert d["ci_lower"] < d["psi_hat"] < d["ci_upper"]
    assert len(d["provenance"]["config_hash"]) == 16
    # same inputs, same output
    out2 = tmp_path / "est2.json"
    run("estimate", "--input", sim_csv, "--estimator", "fixed", "--weight", "identity:0", "--knots", 8,
        "--out", out2)
    d2 = json.loads(out2.read_text())
    assert d2["psi_hat"] == d["psi_hat"] and d2["std_error"] == d["std_error"]
    assert d2["provenance"]["config_hash"] == d["provenance"]["config_hash"]


def test_estimate_longitudinal(tmp_path):
    p = tmp_path / "p.csv"
    run("simulate", "--dgp", "long-t1", "--n", 1500, "--seed", 2, "--out", p)
    out = tmp_path / "l.json"
    assert run("estimate", "--input", p, "--design", "longitudinal", "--regime", "(1,1)", "--knots", 6,
               "--out", out) == 0
    assert np.isfinite(json.loads(out.read_text())["psi_hat"])


def test_longitudinal_needs_regime(sim_csv, tmp_path):
    assert run("estimate", "--input", sim_csv, "--design", "longitudinal", "--out", tmp_path / "o") == 2


def test_runtime_error_single_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("z,a,y\n1,0,1\nq,1,2\n")
    assert run("estimate", "--input", bad, "--out", tmp_path / "o.json") == 1
    err = capsys.readouterr().err.strip()
    assert err.count("\n") == 0 and err.startswith("error: DataError")


def _mc(tmp_path, name, jobs):
    prefix = tmp_path / name
    assert run("montecarlo", "--dgp", "y1a1", "--estimator", "adaptive", "--reps", 4, "--n", 600,
               "--jobs", jobs, "--knots", 6, "--out", prefix) == 0
    return prefix


def test_montecarlo_parallel_identical(tmp_path, capsys):
    a, b = _mc(tmp_path, "a", 1), _mc(tmp_path, "b", 2)
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()
    assert (tmp_path / "a.reps.csv").read_text() == (tmp_path / "b.reps.csv").read_text()
    summ = json.loads((tmp_path / "a.json").read_text())["summaries"]
    assert summ[0]["R"] == 4


def test_montecarlo_truth_estimator(tmp_path, capsys):
    prefix = tmp_path / "t"
    assert run("montecarlo", "--dgp", "oracle-aiv", "--estimator", "truth", "--reps", 3, "--n", 100,
               "--out", prefix) == 0
    for row in json.loads((tmp_path / "t.json").read_text())["summaries"]:
        assert row["bias"] == 0 and row["cr"] == 1


def test_montecarlo_needs_two_reps(tmp_path):
    assert run("montecarlo", "--dgp", "y1a1", "--reps", 1, "--out", tmp_path / "m") == 2


def test_montecarlo_table1_preset(tmp_path, monkeypatch):
    import aivlearn.harness as harness

    seen = []

    def fake(dgp, config, R, **kw):
        seen.append((dgp.name, config.adaptive, config.pi))
        return {lab: harness.MonteCarloSummary(lab, R, 0.0, "closed form", 0.01, 0.1, 0.1, 0.95)
                for lab in ("treated", "control", "ate")}

    monkeypatch.setattr(harness, "run_monte_carlo", fake)
    prefix = tmp_path / "t1"
    assert run("montecarlo", "--preset", "table1", "--reps", 2, "--out", prefix) == 0
    assert len(seen) == 8
    assert {s[0] for s in seen} == {"y1a1", "y2a1", "y1a2", "y2a2"}
    assert sum(s[1] for s in seen) == 4
    text = (tmp_path / "t1.txt").read_text().splitlines()
    assert len(text) == 17


def test_bootstrap_min_reps(sim_csv, tmp_path, capsys):
    assert run("bootstrap", "--input", sim_csv, "--reps", 49, "--out", tmp_path / "b.json") == 2
    assert "50" in capsys.readouterr().err


def test_bootstrap_mean(sim_csv, tmp_path):
    out = tmp_path / "b.json"
    assert run("bootstrap", "--input", sim_csv, "--estimator", "mean", "--reps", 60, "--out", out) == 0
    d = json.loads(out.read_text())
    assert d["estimator"] == "mean"


def test_diagnose_aiv_needs_both_weights(sim_csv, tmp_path, capsys):
    assert run("diagnose", "--input", sim_csv, "--check", "aiv", "--pi1", "identity:0",
               "--out", tmp_path / "d.json") == 2
    assert "--pi2" in capsys.readouterr().err


def test_config_unknown_key_rejected(sim_csv, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[estimate]\nfolds = 2\nbogus = 1\n")
    assert run("estimate", "--config", cfg, "--input", sim_csv, "--out", tmp_path / "o.json") == 2
    assert "bogus" in capsys.readouterr().err
    cfg.write_text("[nonsense]\nfolds = 2\n")
    assert run("estimate", "--config", cfg, "--input", sim_csv, "--out", tmp_path / "o.json") == 2


def test_flags_override_config(sim_csv, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seed = 5\n[estimate]\nfolds = 3\nknots = 8\n")
    out = tmp_path / "o.json"
    assert run("estimate", "--config", cfg, "--folds", 2, "--input", sim_csv, "--out", out) == 0
    prov = json.loads(out.read_text())["provenance"]
    assert prov["params"]["folds"] == 2 and prov["params"]["seed"] == 5 and prov["params"]["knots"] == 8


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "aivlearn.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("simulate", "estimate", "montecarlo", "bootstrap", "diagnose"):
        assert cmd in r.stdout
