import json
import os

import pytest
import yaml

from rownav.cli import main

FAST_SCENARIO = {
    "world": {"row_length": 6.0, "intra_row_space": 1.5, "seed": 21,
              "noise_sigma": 0.0, "canopy_overhang": 3.0},
    "camera": {"rays_h": 120, "rays_v": 60},
    "nmpc": {"v_max": 0.4, "omega_max": 0.5, "dt": 0.7},
    "start": {"x": 0.0, "y": 0.0, "theta": 0.0},
    "max_ticks": 60,
    "thresholds": {"collisions": 0, "v_avg": 0.3},
}


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.yaml"
    path.write_text(yaml.safe_dump(FAST_SCENARIO))
    return str(path)


def test_run_writes_outputs_and_exits_zero(fast_config, tmp_path, capsys):
    out = str(tmp_path / "out")
    code = main(["run", "--config", fast_config, "--out", out])
    assert code == 0
    assert os.path.exists(os.path.join(out, "trajectory.csv"))
    assert os.path.exists(os.path.join(out, "metrics.json"))
    assert os.path.exists(os.path.join(out, "config_snapshot.yaml"))
    with open(os.path.join(out, "metrics.json")) as fh:
        metrics = json.load(fh)
    assert metrics["collisions"] == 0
    header = open(os.path.join(out, "trajectory.csv")).readline().strip()
    assert header == ("t,x,y,theta,v_cmd,omega_cmd,mode,"
                      "perception_status,solver_status")


def test_run_deterministic_csv(fast_config, tmp_path):
    out1 = str(tmp_path / "a")
    out2 = str(tmp_path / "b")
    assert main(["run", "--config", fast_config, "--seed", "5", "--out", out1]) == 0
    assert main(["run", "--config", fast_config, "--seed", "5", "--out", out2]) == 0
    b1 = open(os.path.join(out1, "trajectory.csv"), "rb").read()
    b2 = open(os.path.join(out2, "trajectory.csv"), "rb").read()
    assert b1 == b2


def test_run_config_error_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    data = dict(FAST_SCENARIO)
    data["pipeline"] = {"f_points": 1.5}
    bad.write_text(yaml.safe_dump(data))
    code = main(["run", "--config", str(bad), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "pipeline.f_points" in capsys.readouterr().err


def test_run_missing_config_exit_two(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "nope.yaml"),
                 "--out", str(tmp_path / "out")])
    assert code == 2


def test_run_not_completed_exit_one(tmp_path, capsys):
    data = dict(FAST_SCENARIO)
    data["max_ticks"] = 5  # far too few ticks to clear the row
    cfg = tmp_path / "short.yaml"
    cfg.write_text(yaml.safe_dump(data))
    out = str(tmp_path / "out")
    code = main(["run", "--config", str(cfg), "--out", out])
    assert code == 1
    assert "not completed" in capsys.readouterr().out
    with open(os.path.join(out, "metrics.json")) as fh:
        metrics = json.load(fh)
    assert metrics["clearance_time"] is None


def test_run_bundled_scenario_resolves(tmp_path):
    from rownav.cli import resolve_config_path
    path = resolve_config_path("sim_straight")
    assert path.endswith("sim_straight.yaml")


def test_check_pass_and_fail(tmp_path, capsys):
    metrics = tmp_path / "metrics.json"
    metrics.write_text(json.dumps({"mae": 0.05, "collisions": 0,
                                   "v_avg": 0.39}))
    good = tmp_path / "good.yaml"
    good.write_text(yaml.safe_dump({"mae": 0.10, "collisions": 0}))
    assert main(["check", "--metrics", str(metrics),
                 "--thresholds", str(good)]) == 0
    out = capsys.readouterr().out
    assert "pass mae" in out

    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"collisions": 0, "v_avg": 0.5}))
    assert main(["check", "--metrics", str(metrics),
                 "--thresholds", str(bad)]) == 1
    assert "FAIL v_avg" in capsys.readouterr().out


def test_check_missing_metric_fails_by_name(tmp_path, capsys):
    metrics = tmp_path / "metrics.json"
    metrics.write_text(json.dumps({"mae": 0.05}))
    th = tmp_path / "th.yaml"
    th.write_text(yaml.safe_dump({"gamma_std": 0.1}))
    assert main(["check", "--metrics", str(metrics),
                 "--thresholds", str(th)]) == 1
    assert "gamma_std" in capsys.readouterr().out


def test_check_empty_thresholds_vacuous_pass(tmp_path, capsys):
    metrics = tmp_path / "metrics.json"
    metrics.write_text(json.dumps({"mae": 0.05}))
    th = tmp_path / "th.yaml"
    th.write_text(yaml.safe_dump({}))
    assert main(["check", "--metrics", str(metrics),
                 "--thresholds", str(th)]) == 0
    assert "warning" in capsys.readouterr().out


def test_check_reads_thresholds_from_scenario(fast_config, tmp_path):
    metrics = tmp_path / "metrics.json"
    metrics.write_text(json.dumps({"collisions": 0, "v_avg": 0.35}))
    assert main(["check", "--metrics", str(metrics),
                 "--thresholds", fast_config]) == 0


def test_sweep_rows_and_fault_isolation(fast_config, tmp_path, capsys):
    grid = tmp_path / "grid.yaml"
    grid.write_text(yaml.safe_dump({"nmpc.K_lane": [0.5, 1.0, 2.0]}))
    out = str(tmp_path / "sweep")
    code = main(["sweep", "--config", fast_config, "--grid", str(grid),
                 "--out", out])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.count("nmpc.K_lane") == 3
    payload = json.loads(open(os.path.join(out, "sweep.json")).read())
    assert len(payload) == 3
    assert all(row["status"] == "ok" for row in payload)


def test_sweep_empty_grid_single_baseline(fast_config, tmp_path, capsys):
    grid = tmp_path / "grid.yaml"
    grid.write_text(yaml.safe_dump({}))
    assert main(["sweep", "--config", fast_config, "--grid", str(grid)]) == 0
    assert "baseline" in capsys.readouterr().out


def test_sweep_bad_cell_flagged_others_run(fast_config, tmp_path, capsys):
    grid = tmp_path / "grid.yaml"
    grid.write_text(yaml.safe_dump({"pipeline.f_points": [0.2, 2.0]}))
    code = main(["sweep", "--config", fast_config, "--grid", str(grid)])
    assert code == 0
    out = capsys.readouterr().out
    assert "error" in out and "ok" in out
