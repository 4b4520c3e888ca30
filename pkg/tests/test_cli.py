import csv
import json
from pathlib import Path

import pytest

from memfront import cli, config, experiments
from memfront.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_defaults_fill_in():
    cfg = config.load(experiment="single_run")
    assert cfg["nonlinearity"] == {"type": "cubic", "a": 0.6}
    assert cfg["evolve"]["dx"] == 0.1
    assert cfg["twfront"]["L"] == 60.0


def test_overrides_parse_json_values():
    cfg = config.load(experiment="speed_sweep",
                      overrides=["sweep.beta_min=-0.01", "sweep.beta_max=0.0",
                                 "sweep.beta_step=0.005", "routes=[\"fixed_point\"]"])
    assert cfg["sweep"]["beta_min"] == -0.01
    assert cfg["routes"] == ["fixed_point"]


def test_kernel_block_replaced_wholesale():
    cfg = config.load(data={"experiment": "kernel_check",
                            "kernel": {"form": "pde_ode", "couplings": [[1, 1, 1]]}})
    assert cfg["kernel"] == {"form": "pde_ode", "couplings": [[1, 1, 1]]}


@pytest.mark.parametrize("data", [
    {"experiment": "nope"},
    {"experiment": "single_run", "D": -1.0},
    {"experiment": "single_run", "evolve": {"dt": 0.01, "bogus": 1}},
    {"experiment": "speed_sweep", "sweep": {"beta_min": 0.1, "beta_max": 0.0, "beta_step": 0.01}},
    {"experiment": "single_run", "nonlinearity": {"type": "cubic", "a": 1.5}},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        config.load(data=data)


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        config.apply_overrides({}, ["noequals"])


def test_bundled_configs_validate():
    for path in CONFIGS.glob("*.json"):
        config.load(path)


def test_sweep_betas_and_sign_changes():
    betas = experiments.sweep_betas({"beta_min": -0.06, "beta_max": 0.03, "beta_step": 0.005,
                                     "extra_betas": [-0.0311]})
    assert len(betas) == 20
    assert betas[0] == -0.06 and betas[-1] == 0.03
    assert experiments.sign_changes([0, 1, 2, 3], [1.0, -1.0, -2.0, 2.0]) == [0.5, 2.5]
    assert experiments.sign_changes([0, 1, 2], [0.0, 1.0, None]) == [0]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("MEMFRONT_THREADS", "2")
    assert experiments.worker_count(8) == 2
    monkeypatch.delenv("MEMFRONT_THREADS")
    assert experiments.worker_count(3) == 3


def test_small_sweep_writes_outputs(tmp_path):
    cfg = config.load(experiment="speed_sweep", overrides=[
        "sweep={\"beta_min\": -0.05, \"beta_max\": 0.0, \"beta_step\": 0.05}",
        "evolve.X=100", "evolve.T_end=40"])
    rows, summary = experiments.run_speed_sweep(cfg, tmp_path)
    assert [r["status"] for r in rows] == ["ok", "ok"]
    assert summary["bracket_all_ok"]
    assert len(summary["sign_changes_fixed_point"]) == 1
    with open(tmp_path / "sweep.csv") as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 2
    assert set(experiments.SWEEP_COLUMNS) == set(table[0])
    manifest = json.loads((tmp_path / "sweep.manifest.json").read_text())
    assert manifest["columns"] == experiments.SWEEP_COLUMNS


def test_sweep_row_captures_failures():
    cfg = config.load(experiment="speed_sweep", overrides=[
        "sweep={\"beta_min\": 0.0, \"beta_max\": 0.0, \"beta_step\": 0.01}",
        "routes=[\"fixed_point\"]", "twfront.L=3"])
    row = experiments.sweep_row(cfg, 0.0)
    assert row["status"] == "failed"
    assert "DomainTooSmall" in row["error"]


def test_cli_kernel_check(tmp_path, capsys):
    code = cli.main(["kernel-check", "--config", str(CONFIGS / "kernel_sqdiff.json"),
                     "--out", str(tmp_path)])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["gamma"] == pytest.approx(1 / 12)
    assert out["g1_hat"] == pytest.approx(13 / 12)
    assert (tmp_path / "kernel_check.json").exists()


def test_cli_negative_kernel_exit_code(tmp_path):
    code = cli.main(["kernel-check", "--out", str(tmp_path), "--override",
                     "kernel={\"form\": \"pde_ode\", \"couplings\": [[1,1,2],[-3,1,3],[1,1,4]]}"])
    assert code == cli.EXIT_CONFIG


def test_cli_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["front", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["front", "--override", "D=-2"]) == cli.EXIT_CONFIG


def test_cli_solver_failure_exit_code(tmp_path):
    code = cli.main(["front", "--out", str(tmp_path), "--override", "beta=-0.05",
                     "--override", "routes=[\"fixed_point\"]", "--override", "twfront.L=3"])
    assert code == cli.EXIT_SOLVER


def test_cli_front(tmp_path, capsys):
    code = cli.main(["front", "--out", str(tmp_path), "--override", "beta=-0.05",
                     "--override", "evolve.X=100", "--override", "evolve.T_end=30",
                     "--override", "evolve.snapshot_times=[10]"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["fp_residual"] < 1e-6
    assert out["measured_speed"] == pytest.approx(out["fixed_point_speed"], abs=5e-3)
    for name in ("front_profile.csv", "front_profile.json", "evolve_track.csv",
                 "evolve_snap_t10.csv", "front_summary.json"):
        assert (tmp_path / name).exists(), name


def test_cli_twoscale_small(tmp_path, capsys):
    code = cli.main(["twoscale", "--out", str(tmp_path), "--override",
                     "twoscale={\"N_y\": 16, \"X\": 60, \"T_end\": 10,"
                     " \"snapshot_times\": [10]}"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    # reported weight uses the default 256-point y-grid
    assert out["gamma"] == pytest.approx(0.08763, abs=1e-4)
    assert out["direction"] == "right_to_left"
    assert out["max_abs_mean_W"] < 1e-10
    assert out["speed_difference"] < 1e-3
    header = (tmp_path / "W_t10.csv").read_text().splitlines()[0]
    assert header == "x,y,W"
    assert (tmp_path / "eigen.csv").exists()


def test_cli_sweep_rejects_wrong_experiment(tmp_path):
    code = cli.main(["sweep", "--config", str(CONFIGS / "kernel_sqdiff.json")])
    assert code == cli.EXIT_CONFIG


def test_sweep_without_memory_row(tmp_path):
    cfg = config.load(experiment="speed_sweep", overrides=[
        "sweep={\"beta_min\": 0.0, \"beta_max\": 0.0, \"beta_step\": 0.01}",
        "evolve.X=200", "evolve.T_end=100"])
    rows, _ = experiments.run_speed_sweep(cfg, tmp_path)
    (row,) = rows
    assert abs(row["c_measured"] - row["c_mckean"]) < 1e-2
    # at the default h the fixed point carries the O(h^2) grid error of about 1e-6
    assert abs(row["c_fixed_point"] - row["c_mckean"]) < 1e-5
