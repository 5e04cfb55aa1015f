"""Experiment orchestration: seed sweeps, CSV artifacts, grid search.

Floats are serialized with 17 significant digits so write -> parse -> write is
byte-identical and values round-trip losslessly. Absent metric values are
empty CSV fields, never 0.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, config_text
from .evaluator import EvaluatorConfig, RunAborted, RunLog, TrainConfig, run
from .methods import MethodConfig
from .streams import (
    EvalSubsampleConfig,
    TaskStream,
    make_mnist_split,
    make_permuted_stream,
    make_split_synthetic,
)

__all__ = [
    "OUTPUT_ROOT_ENV",
    "build_stream",
    "run_config_seed",
    "run_experiment",
    "grid_search",
    "write_csv",
    "read_csv",
    "fmt_value",
]

OUTPUT_ROOT_ENV = "CLEVAL_OUTPUT_ROOT"

TRACE_HEADER = ("run_seed", "t", "eval_task", "n_samples", "accuracy")
PROBES_HEADER = (
    "run_seed",
    "t",
    "loss_plasticity",
    "loss_stability",
    "grad_norm_plasticity",
    "grad_norm_stability",
)


def metrics_header(windows) -> tuple[str, ...]:
    return (
        "run_seed",
        "t",
        "current_task",
        "acc_current",
        "min_acc",
        "wc_acc",
        *[f"wf_{w}" for w in windows],
        *[f"wp_{w}" for w in windows],
    )


def final_header(windows) -> tuple[str, ...]:
    return (
        "run_seed",
        "acc",
        "forg",
        "min_acc",
        "wc_acc",
        *[f"wf_{w}" for w in windows],
        *[f"wp_{w}" for w in windows],
    )


def fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    lines.extend(",".join(fmt_value(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Cell-preserving parse; values stay strings so a rewrite is byte-identical."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].split(",")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}: row {i} has {len(cells)} cells, expected {len(header)}")
        rows.append(cells)
    return header, rows


def build_stream(cfg: RunConfig) -> TaskStream:
    if cfg.dataset == "synthetic_split":
        return make_split_synthetic(
            n_classes=cfg.synth_classes,
            dims=cfg.synth_dims,
            per_class_train=cfg.synth_train_per_class,
            per_class_eval=cfg.synth_eval_per_class,
            n_tasks=cfg.n_tasks,
            seed=cfg.data_seed,
            iters_per_task=cfg.iters_per_task,
            scenario=cfg.scenario,
        )
    if cfg.dataset == "mnist_split":
        return make_mnist_split(
            cfg.mnist_dir,
            n_tasks=cfg.n_tasks,
            iters_per_task=cfg.iters_per_task,
            scenario=cfg.scenario,
        )
    if cfg.dataset == "permuted":
        base = make_split_synthetic(
            n_classes=cfg.synth_classes,
            dims=cfg.synth_dims,
            per_class_train=cfg.synth_train_per_class,
            per_class_eval=cfg.synth_eval_per_class,
            n_tasks=1,
            seed=cfg.data_seed,
            iters_per_task=cfg.iters_per_task,
        )
        return make_permuted_stream(
            base.tasks[0].train,
            base.tasks[0].eval_set,
            n_tasks=cfg.n_tasks,
            seed=cfg.data_seed,
            iters_per_task=cfg.iters_per_task,
        )
    raise ValueError(f"unknown dataset {cfg.dataset!r}")


def _method_cfg(cfg: RunConfig) -> MethodConfig:
    return MethodConfig(
        name=cfg.method,
        alpha=cfg.alpha,
        buffer_capacity=cfg.buffer_capacity,
        gem_margin=cfg.gem_margin,
        lwf_temperature=cfg.lwf_temperature,
        ewc_lambda=cfg.ewc_lambda,
        fisher_samples=cfg.fisher_samples,
    )


def _train_cfg(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        lr=cfg.lr,
        momentum=cfg.momentum,
        batch_size=cfg.batch_size,
        hidden=(cfg.hidden_units,) * cfg.hidden_layers,
    )


def _eval_cfg(cfg: RunConfig) -> EvaluatorConfig:
    return EvaluatorConfig(
        rho_eval=cfg.rho_eval,
        subsample=EvalSubsampleConfig(
            sample_size=cfg.eval_subsample,
            resample_each_eval=cfg.resample_each_eval,
            source=cfg.eval_source,
        ),
        window_sizes=cfg.window_sizes,
        minacc_range=cfg.minacc_range,
    )


def run_config_seed(cfg: RunConfig, seed: int, stream: TaskStream | None = None) -> RunLog:
    """One full run of a config with one seed."""
    if stream is None:
        stream = build_stream(cfg)
    return run(stream, _method_cfg(cfg), _train_cfg(cfg), _eval_cfg(cfg), seed)


def _final_row(seed: int, log: RunLog, windows) -> list:
    last = log.boundary_summaries[-1]
    return [
        seed,
        last.acc,
        last.forg,
        last.min_acc,
        last.wc_acc,
        *[last.wf[w] for w in windows],
        *[last.wp[w] for w in windows],
    ]


def _mean_sd_row(final_rows, windows) -> list:
    cells = ["mean±sd"]
    n_cols = len(final_header(windows))
    for col in range(1, n_cols):
        vals = [row[col] for row in final_rows if row[col] is not None]
        if not vals:
            cells.append(None)
            continue
        mean = float(np.mean(vals))
        sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        cells.append(f"{fmt_value(mean)}±{fmt_value(sd)}")
    return cells


def resolve_output_dir(cfg: RunConfig, output_root: str | None = None) -> Path:
    root = output_root if output_root is not None else os.environ.get(OUTPUT_ROOT_ENV, ".")
    return Path(root) / cfg.output_dir


def run_experiment(cfg: RunConfig, output_root: str | None = None, plots: bool = True) -> dict[str, Path]:
    """Run all seeds of a config and write CSV traces plus accuracy SVGs."""
    out = resolve_output_dir(cfg, output_root)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output dir {out} is not writable: {exc}") from exc

    stream = build_stream(cfg)
    windows = cfg.window_sizes
    trace_rows, metric_rows, probe_rows, final_rows = [], [], [], []
    for seed in cfg.seeds:
        log = run_config_seed(cfg, seed, stream)
        for rec in log.eval_records:
            trace_rows.append([seed, rec.t, rec.task, rec.n_samples, rec.accuracy])
        for rep in log.metric_reports:
            metric_rows.append(
                [
                    seed,
                    rep.t,
                    rep.current_task,
                    rep.acc_current,
                    rep.min_acc,
                    rep.wc_acc,
                    *[rep.wf[w] for w in windows],
                    *[rep.wp[w] for w in windows],
                ]
            )
        for t, p in log.probe_rows:
            probe_rows.append(
                [
                    seed,
                    t,
                    p.loss_plasticity,
                    p.loss_stability,
                    p.norm_grad_plasticity,
                    p.norm_grad_stability,
                ]
            )
        final_rows.append(_final_row(seed, log, windows))

    paths = {
        "eval_trace": write_csv(out / "eval_trace.csv", TRACE_HEADER, trace_rows),
        "metrics": write_csv(out / "metrics.csv", metrics_header(windows), metric_rows),
        "probes": write_csv(out / "probes.csv", PROBES_HEADER, probe_rows),
        "final": write_csv(
            out / "final.csv", final_header(windows), final_rows + [_mean_sd_row(final_rows, windows)]
        ),
        "config": (out / "config.cfg"),
    }
    paths["config"].write_text(config_text(cfg), encoding="utf-8")
    if plots:
        from .plotting import plot_curves

        paths["plots"] = plot_curves(paths["eval_trace"], paths["metrics"], out)
    return paths


def final_acc(cfg: RunConfig, seed: int, stream: TaskStream | None = None) -> float:
    """Final-boundary ACC for grid scoring; diverged runs score 0."""
    try:
        log = run_config_seed(cfg, seed, stream)
    except RunAborted:
        return 0.0
    return log.boundary_summaries[-1].acc


def grid_search(base_cfg: RunConfig, grid: dict[str, list]) -> tuple[RunConfig, list[dict]]:
    """Exhaustive search over the Cartesian product of the grid axes.

    Cell score is the mean final ACC over the configured seeds; ties keep the
    first cell in deterministic grid order.
    """
    if not grid:
        raise ValueError("empty grid")
    keys = list(grid)
    report = []
    best_cfg = None
    best_score = -np.inf
    for combo in itertools.product(*(grid[k] for k in keys)):
        cell = dict(zip(keys, combo))
        cfg = replace(base_cfg, **cell)
        stream = build_stream(cfg)
        accs = [final_acc(cfg, seed, stream) for seed in cfg.seeds]
        score = float(np.mean(accs))
        report.append({**cell, "mean_acc": score})
        if score > best_score:
            best_score = score
            best_cfg = cfg
    return best_cfg, report
