"""Experiment harness: configs, sweeps, CSV outputs and the command line."""

from .analysis import SchemaError, compare, moving_average, reward_curve
from .config import ALGORITHMS, ConfigError, ExperimentConfig, dump_config, load_config
from .runner import DETAIL_FIELDS, SCHEMA_VERSION, SUMMARY_FIELDS, plan_jobs, run, summarize

__all__ = [
    "ALGORITHMS", "ConfigError", "ExperimentConfig", "dump_config", "load_config",
    "DETAIL_FIELDS", "SUMMARY_FIELDS", "SCHEMA_VERSION", "plan_jobs", "run", "summarize",
    "SchemaError", "compare", "moving_average", "reward_curve",
]
