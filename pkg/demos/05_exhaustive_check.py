"""Sanity-check the pipeline against an exhaustive tap sweep.

On a single-phase feeder with one regulator there are only 33 tap positions,
so every one can be verified with the exact power flow. The pipeline's
verified objective must land within a fraction of a percent of the sweep's
best feasible result.
"""

from pathlib import Path

import tapflow as tf

HERE = Path(__file__).resolve().parent
model = tf.parse_feeder((HERE.parent / "fixtures" / "tiny3.json").read_text())
cfg = tf.config_from_model(model)

oracle = tf.brute_force(model, cfg)
print(f"swept {oracle.evaluated} tap settings, {oracle.feasible_count} feasible")
print(f"best: taps {oracle.taps[0]}, import {oracle.objective:.6f} p.u.")

report = tf.run_opts(model, cfg)
print(f"pipeline: taps {report.taps[0]}, verified import "
      f"{report.objective_verified:.6f} p.u.")
ratio = report.objective_verified / oracle.objective
print(f"pipeline / oracle = {ratio:.5f}  (must stay below 1.005)")

gap = tf.optimality_gap(report.objective_verified, oracle.objective)
print(f"gap against the sweep optimum: {gap:.2f}%")
