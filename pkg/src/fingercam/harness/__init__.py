"""Experiment orchestration: configs, pipelines, evaluation, CLI."""

from .config import ConfigError, ExperimentConfig, load_config_file, parse_config_text
from .evalrun import EvalReport, reports_to_csv, reports_to_table, run_eval
from .grid import GRID_CELLS, REFERENCE_RESULTS, cell_config, run_ablation_grid
from .pipeline import collect_demos, record_episode, train_policy

__all__ = [
    "ConfigError",
    "EvalReport",
    "ExperimentConfig",
    "GRID_CELLS",
    "REFERENCE_RESULTS",
    "cell_config",
    "collect_demos",
    "load_config_file",
    "parse_config_text",
    "record_episode",
    "reports_to_csv",
    "reports_to_table",
    "run_ablation_grid",
    "run_eval",
    "train_policy",
]
