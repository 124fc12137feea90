"""Desk-scale directional benchmark on the occluded-button task.

Trains the full camera set and the third-view-only baseline on one shared
set of scripted demonstrations, then evaluates both over paired seeds. The
fingertip views are the only sensors that can observe the button's lateral
position inside the box, so the third-view baseline is expected to trail
the full policy by a wide margin.
"""
from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

from .config import ExperimentConfig
from .evalrun import EvalReport, reports_to_csv, reports_to_table, run_eval
from .grid import reference_for
from .pipeline import collect_demos, train_policy

EVAL_EPISODE_LEN = 56  # demo length is 40; slack tolerates one extra re-plan


def benchmark_config(out_dir, demos=100, rollouts=50, train_steps=6000) -> ExperimentConfig:
    return ExperimentConfig(
        task="button",
        demo_scenario="occluded",
        demos=demos,
        train_steps=train_steps,
        batch_size=32,
        learning_rate=5e-4,
        model_dim=96,
        layers=3,
        heads=8,
        eval_scenarios=f"occluded:{rollouts}",
        eval_seed0=10000,
        seed=0,
        out_dir=str(out_dir),
    )


def run_button_benchmark(base: ExperimentConfig, labels=(("full", "full"), ("tvc", "tvc"))):
    """Collect once, then train/evaluate each camera set with paired seeds."""
    out = Path(base.out_dir)
    t0 = time.time()
    demo_paths = collect_demos(base, out / "demos")
    reports: list[EvalReport] = []
    for label, camera_set in labels:
        exp = dataclasses.replace(base, camera_set=camera_set, out_dir=str(out / label))
        ckpt = train_policy(exp, demo_paths)
        eval_exp = dataclasses.replace(exp, episode_len=EVAL_EPISODE_LEN)
        report = run_eval(ckpt, eval_exp, label=label)
        report.save(out / f"report_{label}.json")
        reports.append(report)

    reference = {(rep.label, rep.task): reference_for(rep.label, rep.task) for rep in reports}
    table = reports_to_table(reports, reference)
    reports_to_csv(reports, out / "benchmark.csv")
    (out / "benchmark.txt").write_text(table + "\n")
    summary = {
        "full_rate": reports[0].rate("occluded"),
        "tvc_rate": reports[1].rate("occluded"),
        "gap_points": 100 * (reports[0].rate("occluded") - reports[1].rate("occluded")),
        "runtime_seconds": time.time() - t0,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    return reports, summary
