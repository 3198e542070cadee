import csv
import io
import json
import subprocess
import sys

import pytest

from allocsim.cli import SWEEP_COLUMNS, ConfigError, RunConfig, parse_config, run_command
from allocsim.scenario import ScenarioSpec, generate_scenario

SMALL = {"scenario_spec": {"n_participants": 20, "n_resources": 10}, "scenario_seed": 1}


def _config(tmp_path, **extra):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({**SMALL, **extra}))
    return str(path)


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "run"
    assert run_command(["simulate", "--config", _config(tmp_path), "--seed", "7", "--out", str(out)]) == 0
    for name in ("trace.jsonl", "metrics.json", "outcome.json"):
        assert (out / name).exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["seed"] == 7 and metrics["n"] == 20
    assert (out / "metrics.json").stat().st_mode & 0o044  # not left at mkstemp's 0600


def test_simulate_is_byte_identical(tmp_path):
    cfg = _config(tmp_path, preset="pi_H")
    for name in ("a", "b"):
        assert run_command(["simulate", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for name in ("trace.jsonl", "metrics.json", "outcome.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_scenario_file_config(tmp_path):
    sc = generate_scenario(ScenarioSpec(8, 4), 2)
    (tmp_path / "sc.json").write_text(sc.to_json())
    (tmp_path / "c.json").write_text(json.dumps({"scenario": "sc.json", "out": "res"}))
    assert run_command(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "res")]) == 0
    assert json.loads((tmp_path / "res" / "metrics.json").read_text())["n"] == 8


def test_unknown_subcommand_is_usage_error(capsys):
    assert run_command(["dance"]) == 1
    assert "usage:" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert run_command(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_unwritable_out_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_command(["simulate", "--config", _config(tmp_path), "--out", str(blocker / "sub")]) == 2


def test_bad_config_lists_every_problem(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"scenario": "a.json", "scenario_spec": {"n_participants": 3, "n_resources": 3},
                                "policy": {"m": 0}, "seeds": "x", "colour": 1}))
    assert run_command(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    for fragment in ("exactly one of", "m out of range", "colour", "seeds"):
        assert fragment in err


def test_parse_config():
    cfg = parse_config({**SMALL, "policy": {"m": 2, "k": 3}, "seeds": [1, 2]})
    assert isinstance(cfg, RunConfig)
    assert cfg.policy.m == 2 and cfg.policy.proportions == (0.5, 0.5) and cfg.seeds == [1, 2]
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({**SMALL, "scenario": "x.json"})
    with pytest.raises(ConfigError):
        parse_config([])


def test_sweep_entry_resource(tmp_path):
    out = tmp_path / "sweep"
    assert run_command(["sweep", "--config", _config(tmp_path), "--out", str(out), "--seeds", "3"]) == 0
    rows = _rows(out / "sweep.csv")
    assert len(rows) == 9
    assert tuple(rows[0]) == SWEEP_COLUMNS
    combos = {(r["entry_rule"], r["resource_rule"]) for r in rows}
    assert len(combos) == 9


def test_sweep_jobs_match_serial(tmp_path):
    cfg = _config(tmp_path)
    run_command(["sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--seeds", "1,2", "--grid", "sorting"])
    run_command(["sweep", "--config", cfg, "--out", str(tmp_path / "p"), "--seeds", "1,2", "--grid", "sorting",
                 "--jobs", "3"])
    assert (tmp_path / "s" / "sweep.csv").read_text() == (tmp_path / "p" / "sweep.csv").read_text()


def test_baseline_small_and_large(tmp_path):
    small = tmp_path / "small.json"
    small.write_text(json.dumps({"scenario_spec": {"n_participants": 5, "n_resources": 4}}))
    assert run_command(["baseline", "--config", str(small), "--out", str(tmp_path / "b1")]) == 0
    data = json.loads((tmp_path / "b1" / "baseline.json").read_text())
    assert data["km"]["sw"] == pytest.approx(data["exhaustive"]["sw"])
    assert run_command(["baseline", "--config", _config(tmp_path), "--out", str(tmp_path / "b2")]) == 0
    assert json.loads((tmp_path / "b2" / "baseline.json").read_text())["exhaustive"] is None


def test_report_merges_runs(tmp_path):
    cfg = _config(tmp_path)
    for seed in ("1", "2"):
        run_command(["simulate", "--config", cfg, "--seed", seed, "--out", str(tmp_path / f"run{seed}")])
    out = tmp_path / "summary" / "report.csv"
    assert run_command(["report", str(tmp_path / "run1"), str(tmp_path / "run2"), "--out", str(out)]) == 0
    rows = _rows(out)
    assert [r["run"] for r in rows] == ["run1", "run2"]
    assert run_command(["report", str(tmp_path / "missing"), "--out", str(out)]) == 2


@pytest.mark.parametrize("surrogate", [{"exact": True}, {"batch": 20, "max_samples": 40, "mae_threshold": 0.5}])
def test_optimize_outputs(tmp_path, surrogate):
    cfg = _config(tmp_path, ga={"iterations": 3, "pool_size": 8}, calibration_size=2, surrogate=surrogate)
    out = tmp_path / "opt"
    assert run_command(["optimize", "--config", cfg, "--out", str(out), "--seeds", "0"]) == 0
    best = json.loads((out / "best_policy.json").read_text())
    assert set(best["best_policy"]) >= {"m", "entry_rule", "k", "c"}
    assert len(_rows(out / "history.csv")) == 4
    assert (out / "dataset.csv").exists() == (not surrogate.get("exact", False))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "allocsim", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout
