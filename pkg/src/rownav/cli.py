"""Scenario runner and regression gate.

Subcommands:
  run    execute one scenario, write trajectory CSV + metrics JSON
  check  compare a metrics file against thresholds
  sweep  run the cross-product of parameter overrides

Exit codes: 0 success, 1 scenario or threshold failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
from importlib import resources

import yaml

from .config import (THRESHOLD_SENSE, ConfigError, ScenarioConfig, dump_scenario,
                     load_scenario, scenario_from_dict)
from .core import heading_of, pose_from
from .metrics import MetricsReport, NotCompleted, compute_report
from .sim import RunLog, generate_world, run_scenario

CSV_COLUMNS = ["t", "x", "y", "theta", "v_cmd", "omega_cmd",
               "mode", "perception_status", "solver_status"]


def resolve_config_path(name: str) -> str:
    """Accept a filesystem path or the name of a bundled scenario."""
    if os.path.exists(name):
        return name
    base = name if name.endswith(".yaml") else name + ".yaml"
    bundled = resources.files("rownav").joinpath("scenarios", base)
    if bundled.is_file():
        return str(bundled)
    raise ConfigError([f"config: no such file or bundled scenario: {name}"])


def _write_trajectory_csv(log: RunLog, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in log.records:
            writer.writerow([
                repr(rec.t),
                repr(rec.pose.x1),
                repr(rec.pose.x2),
                repr(heading_of(rec.pose)),
                repr(rec.command.v),
                repr(rec.command.omega),
                rec.mode.value,
                rec.perception_status.value,
                rec.solver_status.value if rec.solver_status is not None else "",
            ])


def execute_scenario(cfg: ScenarioConfig) -> tuple[RunLog, MetricsReport | None]:
    world = generate_world(cfg.world)
    start = pose_from(cfg.start.x, cfg.start.y, cfg.start.theta)
    log = run_scenario(world, start, cfg.camera, cfg.pipeline, cfg.nmpc,
                       cfg.fallback, cfg.targets, cfg.max_ticks)
    try:
        report = compute_report(log, world.centerline, cfg.span, cfg.desired_offset)
    except NotCompleted:
        report = None
    return log, report


def _cmd_run(args) -> int:
    try:
        cfg = load_scenario(resolve_config_path(args.config))
    except ConfigError as exc:
        for message in exc.errors:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.world.seed = args.seed

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    try:
        log, report = execute_scenario(cfg)
        csv_path = os.path.join(out_dir, "trajectory.csv")
        _write_trajectory_csv(log, csv_path)
        written.append(csv_path)

        metrics_path = os.path.join(out_dir, "metrics.json")
        payload = report.as_dict() if report is not None else {
            "clearance_time": None, "collisions": log.collisions}
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(metrics_path)

        snap_path = os.path.join(out_dir, "config_snapshot.yaml")
        dump_scenario(cfg, snap_path)
        written.append(snap_path)
    except Exception as exc:  # unexpected failure: no partial outputs
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if report is not None:
        print(report.as_text())
    if log.collision:
        print(f"FAIL: collision ({log.collision_note})")
        return 1
    if report is None:
        print("FAIL: row not completed")
        return 1
    print(f"ok: wrote {out_dir}")
    return 0


def check_thresholds(metrics: dict, thresholds: dict) -> tuple[bool, list[str]]:
    """Compare metrics to bounds; returns (all_ok, report lines)."""
    lines = []
    ok = True
    if not thresholds:
        lines.append("warning: no thresholds given, vacuous pass")
        return True, lines
    for name in sorted(thresholds):
        bound = thresholds[name]
        sense = THRESHOLD_SENSE.get(name)
        if sense is None:
            ok = False
            lines.append(f"FAIL {name}: unknown metric")
            continue
        value = metrics.get(name)
        if value is None:
            ok = False
            lines.append(f"FAIL {name}: missing from metrics file")
            continue
        passed = {"<=": value <= bound, ">=": value >= bound,
                  "==": value == bound}[sense]
        tag = "pass" if passed else "FAIL"
        lines.append(f"{tag} {name} = {value} (required {sense} {bound})")
        ok = ok and passed
    return ok, lines


def _load_thresholds(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, dict) and "thresholds" in data:
        data = data["thresholds"]
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: expected a mapping of metric bounds"])
    return data


def _cmd_check(args) -> int:
    try:
        with open(args.metrics, "r", encoding="utf-8") as fh:
            metrics = json.load(fh)
        thresholds = _load_thresholds(args.thresholds)
    except ConfigError as exc:
        for message in exc.errors:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except (OSError, ValueError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ok, lines = check_thresholds(metrics, thresholds)
    for line in lines:
        print(line)
    return 0 if ok else 1


def _set_dotted(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    here = data
    for key in keys[:-1]:
        here = here.setdefault(key, {})
        if not isinstance(here, dict):
            raise ConfigError([f"grid key {dotted}: {key} is not a mapping"])
    here[keys[-1]] = value


def _cmd_sweep(args) -> int:
    try:
        path = resolve_config_path(args.config)
        with open(path, "r", encoding="utf-8") as fh:
            base = yaml.safe_load(fh) or {}
        with open(args.grid, "r", encoding="utf-8") as fh:
            grid = yaml.safe_load(fh) or {}
        if not isinstance(grid, dict):
            raise ConfigError([f"{args.grid}: expected a mapping of key -> list"])
        scenario_from_dict(base)  # validate the baseline before sweeping
    except ConfigError as exc:
        for message in exc.errors:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    keys = sorted(grid)
    value_lists = [grid[k] if isinstance(grid[k], list) else [grid[k]] for k in keys]
    cells = list(itertools.product(*value_lists)) if keys else [()]

    rows = []
    for combo in cells:
        data = yaml.safe_load(yaml.safe_dump(base))  # deep copy
        label = ", ".join(f"{k}={v}" for k, v in zip(keys, combo)) or "baseline"
        try:
            for key, value in zip(keys, combo):
                _set_dotted(data, key, value)
            cfg = scenario_from_dict(data)
            if args.seed is not None:
                cfg.world.seed = args.seed
            log, report = execute_scenario(cfg)
            if log.collision:
                rows.append((label, "collision", None))
            elif report is None:
                rows.append((label, "not_completed", None))
            else:
                rows.append((label, "ok", report))
        except Exception as exc:
            rows.append((label, f"error: {exc}", None))

    header = f"{'cell':<40} {'status':<16} {'v_avg':>7} {'mae':>7} {'omega_std':>10}"
    print(header)
    for label, status, report in rows:
        if report is not None:
            print(f"{label:<40} {status:<16} {report.v_avg:>7.3f} "
                  f"{report.mae:>7.3f} {report.omega_std:>10.3f}")
        else:
            print(f"{label:<40} {status:<16} {'-':>7} {'-':>7} {'-':>10}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        payload = [{"cell": label, "status": status,
                    "metrics": report.as_dict() if report else None}
                   for label, status, report in rows]
        with open(os.path.join(args.out, "sweep.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rownav", description="Row-crop navigation scenario harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--config", required=True,
                       help="scenario YAML path or bundled scenario name")
    p_run.add_argument("--seed", type=int, default=None, help="world seed override")
    p_run.add_argument("--out", default="rownav_out", help="output directory")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="compare metrics to thresholds")
    p_check.add_argument("--metrics", required=True, help="metrics JSON path")
    p_check.add_argument("--thresholds", required=True,
                         help="thresholds YAML (or scenario YAML with a thresholds block)")
    p_check.set_defaults(func=_cmd_check)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--grid", required=True,
                         help="YAML mapping of dotted config key -> list of values")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--out", default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
