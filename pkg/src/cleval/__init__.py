"""Continual-learning lab with per-iteration evaluation and worst-case metrics."""

from .config import ConfigError, RunConfig, parse_config, parse_grid
from .evaluator import EvaluatorConfig, RunAborted, RunLog, TrainConfig, run
from .experiment import build_stream, grid_search, run_config_seed, run_experiment
from .methods import MethodConfig
from .metrics import EvalRecord, MetricState, oracle_wf_wp, wc_acc
from .streams import (
    ALL,
    Dataset,
    EvalSubsampleConfig,
    TaskStream,
    load_idx,
    make_mnist_split,
    make_permuted_stream,
    make_split_synthetic,
)

__all__ = [
    "ALL",
    "ConfigError",
    "Dataset",
    "EvalRecord",
    "EvalSubsampleConfig",
    "EvaluatorConfig",
    "MethodConfig",
    "MetricState",
    "RunAborted",
    "RunConfig",
    "RunLog",
    "TaskStream",
    "TrainConfig",
    "build_stream",
    "grid_search",
    "load_idx",
    "make_mnist_split",
    "make_permuted_stream",
    "make_split_synthetic",
    "oracle_wf_wp",
    "parse_config",
    "parse_grid",
    "run",
    "run_config_seed",
    "run_experiment",
    "wc_acc",
]

__version__ = "0.1.0"
