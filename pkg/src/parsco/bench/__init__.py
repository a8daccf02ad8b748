"""Benchmark harness: problem zoo, methods, configs, CSV, CLI."""

from .config import BenchConfig, ConfigError, MethodSpec, load_config, parse_config
from .harness import (
    CSV_COLUMNS,
    PIPELINE_BUDGET,
    RunRecord,
    baseline_sgd,
    exactball_run,
    full_run,
    pipeline_constants,
    read_csv,
    run_experiment,
    write_csv,
)
from .problems import PROBLEM_KINDS, TestProblem, make_problem, verify_problem
from .report import ScalingFit, depth_scaling_report, format_report

__all__ = [
    "BenchConfig",
    "ConfigError",
    "MethodSpec",
    "load_config",
    "parse_config",
    "CSV_COLUMNS",
    "PIPELINE_BUDGET",
    "RunRecord",
    "baseline_sgd",
    "exactball_run",
    "full_run",
    "pipeline_constants",
    "read_csv",
    "run_experiment",
    "write_csv",
    "PROBLEM_KINDS",
    "TestProblem",
    "make_problem",
    "verify_problem",
    "ScalingFit",
    "depth_scaling_report",
    "format_report",
]
