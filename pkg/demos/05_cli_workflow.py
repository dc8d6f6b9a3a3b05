#!/usr/bin/env python3
"""The run / check / sweep workflow, driven through the CLI entry point.

Executes a quick scenario into a scratch directory, gates its metrics
against thresholds, and sweeps one controller weight over three values.
"""

import os
import tempfile

import yaml

from rownav.cli import main

scratch = tempfile.mkdtemp(prefix="rownav_demo_")
config = os.path.join(scratch, "quick.yaml")
with open(config, "w") as fh:
    yaml.safe_dump({
        "world": {"row_length": 8.0, "intra_row_space": 1.5, "seed": 21,
                  "noise_sigma": 0.005, "canopy_overhang": 3.0},
        "camera": {"rays_h": 120, "rays_v": 60},
        "max_ticks": 80,
        "thresholds": {"collisions": 0, "v_avg": 0.35, "mae": 0.12},
    }, fh)

out = os.path.join(scratch, "run")
print(f"$ rownav run --config {config} --out {out}")
code = main(["run", "--config", config, "--out", out])
print(f"(exit {code})\n")

metrics = os.path.join(out, "metrics.json")
print(f"$ rownav check --metrics {metrics} --thresholds {config}")
code = main(["check", "--metrics", metrics, "--thresholds", config])
print(f"(exit {code})\n")

grid = os.path.join(scratch, "grid.yaml")
with open(grid, "w") as fh:
    yaml.safe_dump({"nmpc.K_lane": [0.5, 1.0, 2.0]}, fh)
print(f"$ rownav sweep --config {config} --grid {grid}")
code = main(["sweep", "--config", config, "--grid", grid])
print(f"(exit {code})")
print(f"\noutputs under {scratch}")
