import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ampstab import cli
from ampstab.experiments import (
    ExperimentConfig,
    SuccessSweepResult,
    run_eigen_profile,
    run_schedule_compare,
    run_single,
    run_success_sweep,
    run_threshold_curve,
    trial_seed,
)

GOLDEN = Path(__file__).parent / "data" / "threshold_curve_golden.csv"


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def header(path):
    return Path(path).read_text().splitlines()[0]


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="bogus")
    with pytest.raises(ValueError):
        ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(gamma_grid=[])
    with pytest.raises(ValueError):
        ExperimentConfig(schedule="lasso")
    assert ExperimentConfig(experiment="threshold_curve").delta == 0.0
    assert ExperimentConfig(experiment="success_sweep").delta == 1e-10


def test_seed_rule():
    assert trial_seed(0, 7) == 7
    assert trial_seed(3, 7) == 3_000_007


def test_success_result_fields():
    res = SuccessSweepResult([100], [0.0, 1.0], np.array([[4, 1]]), 4)
    assert np.allclose(res.fraction, [[1.0, 0.25]])
    assert np.allclose(res.stderr, [[0.0, np.sqrt(0.25 * 0.75 / 4)]])
    assert res.at(100, 1.0) == 0.25


def test_eigen_profile(tmp_path):
    cfg = ExperimentConfig(experiment="eigen_profile", gamma_grid=[0.0, 1.9, 3.6], out_dir=str(tmp_path))
    reports = run_eigen_profile(cfg)
    assert header(tmp_path / "eigen_profile.csv") == "gamma,iter,V,lambda_D,lambda_K"
    assert np.all(reports[0.0].lambda_d == 0)
    assert np.max(np.abs(reports[1.9].lambda_d)) < 1
    assert np.all(np.abs(reports[3.6].lambda_d[1:]) > 1)
    summary = json.loads((tmp_path / "eigen_profile.json").read_text())
    assert summary["schema_version"] == 1
    assert [p["regime"] for p in summary["profiles"]] == ["stable", "stable", "fully_unstable"]


def test_threshold_curve_matches_golden(tmp_path):
    rows = read_csv(GOLDEN)
    cfg = ExperimentConfig(experiment="threshold_curve", rho_grid=[float(r["rho"]) for r in rows],
                           out_dir=str(tmp_path))
    run_threshold_curve(cfg)
    assert header(tmp_path / "threshold_curve.csv") == "rho,gamma_c1,gamma_c2"
    new = read_csv(tmp_path / "threshold_curve.csv")
    for old, cur in zip(rows, new):
        assert float(cur["gamma_c1"]) == pytest.approx(float(old["gamma_c1"]), abs=1e-6)
        assert float(cur["gamma_c2"]) == pytest.approx(float(old["gamma_c2"]), abs=1e-6)
        assert float(cur["gamma_c1"]) <= float(cur["gamma_c2"])
    at = {float(r["rho"]): r for r in new}
    assert float(at[0.1]["gamma_c1"]) == pytest.approx(2.197, abs=0.05)
    assert float(at[0.1]["gamma_c2"]) == pytest.approx(3.162, abs=0.05)


def test_success_sweep_small(tmp_path):
    cfg = ExperimentConfig(experiment="success_sweep", n_list=[300], gamma_grid=[0.0, 6.0], trials=3,
                           out_dir=str(tmp_path))
    res = run_success_sweep(cfg)
    assert res.at(300, 0.0) == 1.0
    assert res.at(300, 6.0) == 0.0
    assert header(tmp_path / "success_sweep.csv") == "N,gamma,trials,successes,fraction,stderr"
    assert header(tmp_path / "success_trials.csv") == "N,gamma,trial,seed,success,status,final_E,iterations"
    assert len(read_csv(tmp_path / "success_trials.csv")) == 6


def test_sweep_is_worker_invariant(tmp_path):
    base = dict(experiment="success_sweep", n_list=[200], gamma_grid=[0.0, 2.4, 5.0], trials=3)
    one = run_success_sweep(ExperimentConfig(**base, workers=1, out_dir=str(tmp_path / "a")))
    two = run_success_sweep(ExperimentConfig(**base, workers=2, out_dir=str(tmp_path / "b")))
    assert np.array_equal(one.successes, two.successes)
    assert (tmp_path / "a" / "success_trials.csv").read_bytes() == (tmp_path / "b" / "success_trials.csv").read_bytes()


def test_schedule_compare_small(tmp_path):
    cfg = ExperimentConfig(experiment="schedule_compare", n=400, gamma_grid=[0.0, 5.0], out_dir=str(tmp_path))
    rows = run_schedule_compare(cfg)
    assert header(tmp_path / "schedule_compare.csv") == "gamma,solver,trial,status,sweeps,final_E"
    by = {(g, s): (status, e) for g, s, _, status, _, e in rows}
    for solver in ("amp", "amp_damped", "rbp_sequential"):
        assert by[(0.0, solver)][0] == "converged"
    finals = [by[(0.0, s)][1] for s in ("amp", "amp_damped", "rbp_sequential")]
    assert max(finals) < 1e-6
    assert by[(5.0, "rbp_sequential")][0] == "converged"
    assert by[(5.0, "amp")][0] != "converged"


def test_single_run_is_byte_deterministic(tmp_path):
    kw = dict(experiment="single_run", n=300, gamma=1.0, base_seed=4, max_iter=50)
    run_single(ExperimentConfig(**kw, out_dir=str(tmp_path / "a")))
    run_single(ExperimentConfig(**kw, out_dir=str(tmp_path / "b")))
    for name in ("trace.csv", "trace.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert header(tmp_path / "a" / "trace.csv") == "iter,E,Vbar,D,max_change"
    side = json.loads((tmp_path / "a" / "trace.json").read_text())
    assert side["seed"] == trial_seed(4, 0)
    assert {"status", "final_E", "final_Vbar", "final_D", "config"} <= set(side)


def test_single_run_se_overlay(tmp_path):
    cfg = ExperimentConfig(experiment="single_run", n=2000, gamma=0.0, max_iter=15, se_overlay=True,
                           out_dir=str(tmp_path))
    trace = run_single(cfg)
    se = read_csv(tmp_path / "se_trace.csv")
    assert list(se[0]) == ["iter", "E", "V", "D"]
    e_se = np.array([float(r["E"]) for r in se])
    k = min(len(e_se), len(trace.e), 8)
    assert np.max(np.abs(trace.e[:k] - e_se[:k])) < 5 / np.sqrt(cfg.n)


def test_cli_flags_override_config(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"n": 200, "gamma": 3.0, "max_iter": 7, "base_seed": 1}))
    out = tmp_path / "out"
    assert cli.main(["single", "--config", str(conf), "--gamma", "0.0", "--out-dir", str(out)]) == 0
    side = json.loads((out / "trace.json").read_text())
    assert side["config"]["gamma"] == 0.0
    assert side["config"]["n"] == 200
    assert side["config"]["max_iter"] == 7


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["single", "--rho", "2.0", "--out-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["single", "--config", str(bad)]) == 2
    assert cli.main(["success-sweep", "--trials", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code != 0
    # failed trials are still a completed experiment
    assert cli.main(["single", "--n", "200", "--gamma", "8", "--max-iter", "20",
                     "--out-dir", str(tmp_path / "x")]) == 0


def test_cli_numerical_error_exit_code(monkeypatch, tmp_path):
    from ampstab.denoiser import NumericalError

    def boom(cfg):
        raise NumericalError("quadrature failed")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["threshold-curve", "--out-dir", str(tmp_path)]) == 3


def test_worker_env_override(monkeypatch):
    from ampstab.experiments import WORKERS_ENV, worker_count

    monkeypatch.setenv(WORKERS_ENV, "3")
    assert worker_count(1) == 3
    monkeypatch.delenv(WORKERS_ENV)
    assert worker_count(2) == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ampstab", "threshold-curve", "--rho-grid", "0.5",
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "threshold_curve.csv").exists()
