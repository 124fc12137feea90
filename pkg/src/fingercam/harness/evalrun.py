"""Seeded paired evaluation and report emission."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..policy import load_checkpoint, receding_horizon_control
from ..simworld import create_task, get_task, reference_tree
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass
class EvalReport:
    label: str
    task: str
    rows: list[dict] = field(default_factory=list)  # scenario/metric level
    provenance: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0

    def add_row(self, scenario: str, metric: str, successes: int, rollouts: int, seeds: list[int]):
        self.rows.append(
            {
                "scenario": scenario,
                "metric": metric,
                "successes": int(successes),
                "rollouts": int(rollouts),
                "rate": successes / rollouts,
                "seeds": list(seeds),
            }
        )

    def rate(self, scenario: str, metric: str | None = None) -> float:
        for row in self.rows:
            if row["scenario"] == scenario and (metric is None or row["metric"] == metric):
                return row["rate"]
        raise KeyError(f"no row for scenario {scenario!r} metric {metric!r}")

    @property
    def average_success_rate(self) -> float:
        return sum(r["rate"] for r in self.rows) / len(self.rows)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "label": self.label,
            "task": self.task,
            "rows": self.rows,
            "average_success_rate": self.average_success_rate,
            "provenance": self.provenance,
            "runtime_seconds": self.runtime_seconds,
        }

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @staticmethod
    def load(path) -> "EvalReport":
        d = json.loads(Path(path).read_text())
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {d.get('schema_version')}")
        rep = EvalReport(label=d["label"], task=d["task"], rows=d["rows"], provenance=d["provenance"])
        rep.runtime_seconds = d.get("runtime_seconds", 0.0)
        return rep


def run_eval(checkpoint_path, exp: ExperimentConfig, label: str | None = None) -> EvalReport:
    """Evaluate a checkpoint over the config's scenario/rollout grid.

    All configs sharing (eval_seed0, counts) consume identical seed lists,
    giving paired comparisons. Rollout errors are logged and counted as
    failures.
    """
    policy = load_checkpoint(checkpoint_path)
    tree = reference_tree()
    task = get_task(exp.task)
    report = EvalReport(label=label or exp.camera_set, task=exp.task)
    t0 = time.time()
    for scenario, count in exp.eval_pairs():
        seeds = exp.eval_seeds(count)
        wins = {m: 0 for m in task.metric_names}
        for seed in seeds:
            world = create_task(exp.task, scenario, seed, config=exp.world_config(), tree=tree)
            episode_len = exp.episode_len or world.episode_len
            try:
                record = receding_horizon_control(policy, world, episode_len, seed=seed)
                for m in task.metric_names:
                    wins[m] += bool(record.success.get(m, False))
            except Exception as e:  # env/policy failures count as misses
                logger.warning("rollout failed (scenario %s seed %d): %s", scenario, seed, e)
        for m in task.metric_names:
            report.add_row(scenario, m, wins[m], count, seeds)
    report.runtime_seconds = time.time() - t0
    report.provenance = {
        "config_hash": exp.hash(),
        "config": exp.to_dict(),
        "checkpoint": str(checkpoint_path),
        "version": f"fingercam-{__version__}",
    }
    return report


# ---------------------------------------------------------------------------
# report formatting


def reports_to_csv(reports: list[EvalReport], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["# eval_report schema", REPORT_SCHEMA_VERSION])
        writer.writerow(
            ["label", "task", "scenario", "metric", "successes", "rollouts", "rate",
             "average_success_rate", "config_hash", "version"]
        )
        for rep in reports:
            for row in rep.rows:
                writer.writerow(
                    [rep.label, rep.task, row["scenario"], row["metric"], row["successes"],
                     row["rollouts"], f"{row['rate']:.4f}", f"{rep.average_success_rate:.4f}",
                     rep.provenance.get("config_hash", ""), rep.provenance.get("version", "")]
                )


def reports_to_table(reports: list[EvalReport], reference: dict | None = None) -> str:
    """Aligned-text comparison table, one line per (report, scenario, metric)."""
    header = ["label", "task", "scenario", "metric", "success", "rate"]
    if reference:
        header.append("paper-ref (not reproducible)")
    rows = []
    for rep in reports:
        for row in rep.rows:
            line = [
                rep.label,
                rep.task,
                row["scenario"],
                row["metric"],
                f"{row['successes']}/{row['rollouts']}",
                f"{100 * row['rate']:.1f}%",
            ]
            if reference:
                ref = reference.get((rep.label, rep.task), None)
                line.append("-" if ref is None else f"{ref:.1f}%")
            rows.append(line)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*["-" * w for w in widths])]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines)
