"""Command-line entry points.

Verbs: ``run <config>``, ``grid <config> <grid-file>``, ``plot <run-dir>``,
``oracle-check``. The output root comes from $CLEVAL_OUTPUT_ROOT (default:
current directory). On failure a single machine-readable JSON error line goes
to stderr and the exit code is non-zero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config, parse_grid, config_text
from .evaluator import RunAborted
from .experiment import grid_search, resolve_output_dir, run_experiment, write_csv, fmt_value

__all__ = ["main"]


def _cmd_run(args) -> int:
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    paths = run_experiment(cfg)
    for name in ("eval_trace", "metrics", "probes", "final"):
        print(paths[name])
    return 0


def _cmd_grid(args) -> int:
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    grid = parse_grid(Path(args.grid).read_text(encoding="utf-8"))
    best, report = grid_search(cfg, grid)
    out = resolve_output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(grid)
    rows = [[cell[k] for k in keys] + [cell["mean_acc"]] for cell in report]
    report_path = write_csv(out / "grid_report.csv", (*keys, "mean_acc"), rows)
    best_path = out / "best.cfg"
    best_path.write_text(config_text(best), encoding="utf-8")
    print(report_path)
    print(best_path)
    for k in keys:
        print(f"best {k} = {fmt_value(getattr(best, k))}")
    return 0


def _cmd_plot(args) -> int:
    from .plotting import plot_curves

    run_dir = Path(args.run_dir)
    for path in plot_curves(run_dir / "eval_trace.csv", run_dir / "metrics.csv", run_dir):
        print(path)
    return 0


def _check_metric_oracle(n_traces: int = 200) -> None:
    from .metrics import MetricState, EvalRecord, oracle_wf_wp

    rng = np.random.default_rng(12345)
    for _ in range(n_traces):
        length = int(rng.integers(1, 300))
        trace = rng.random(length)
        windows = [2, 10, 100, max(2, length)]
        state = MetricState(window_sizes=windows)
        state.add_task(1)
        for i, acc in enumerate(trace, start=1):
            state.update(EvalRecord(t=i, task=1, accuracy=float(acc), n_samples=1))
        for w in windows:
            wf, wp = state.aggregate_wf_wp(w)
            owf, owp = oracle_wf_wp(trace, w)
            if abs(wf - owf) > 1e-12 or abs(wp - owp) > 1e-12:
                raise AssertionError(
                    f"streaming vs oracle mismatch at w={w}: ({wf}, {wp}) vs ({owf}, {owp})"
                )


def _check_gradient_oracle() -> None:
    from . import nn
    from .methods import EwcState, ewc_penalty
    from .oracles import fd_gradient

    rng = np.random.default_rng(7)
    shapes = nn.mlp_shapes(6, (12, 12), 4)
    model = nn.init_model(shapes, rng)
    batch = nn.Batch(rng.standard_normal((8, 6)), rng.integers(0, 4, 8))
    coords = rng.choice(model.params.shape[0], 60, replace=False)

    def rel_err(analytic, numeric):
        denom = np.maximum(np.abs(analytic), np.abs(numeric))
        denom = np.where(denom < 1e-8, 1.0, denom)
        return float(np.max(np.abs(analytic - numeric) / denom))

    _, g = nn.loss_and_grad(model, batch)
    fd = fd_gradient(lambda p: nn.loss_and_grad(nn.ModelState(p, shapes), batch)[0], model.params, coords)
    if rel_err(g.values[coords], fd[coords]) > 1e-6:
        raise AssertionError("cross-entropy gradient does not match finite differences")

    teacher = nn.init_model(shapes, np.random.default_rng(8))
    _, g = nn.distill_loss_and_grad(model, teacher, batch.inputs, 2.0)
    fd = fd_gradient(
        lambda p: nn.distill_loss_and_grad(nn.ModelState(p, shapes), teacher, batch.inputs, 2.0)[0],
        model.params,
        coords,
    )
    if rel_err(g.values[coords], fd[coords]) > 1e-6:
        raise AssertionError("distillation gradient does not match finite differences")

    ewc = EwcState(lam=0.7, anchor=teacher.params.copy(), fisher=rng.random(model.params.shape[0]))
    _, g_pen = ewc_penalty(model.params, ewc)
    # quadratic loss: central differences exact at any step, a larger one
    # avoids cancellation noise
    fd = fd_gradient(lambda p: ewc_penalty(p, ewc)[0], model.params, coords, eps=1e-2)
    if rel_err(g_pen[coords], fd[coords]) > 1e-6:
        raise AssertionError("ewc penalty gradient does not match finite differences")


def _check_gem_oracle(n_problems: int = 50) -> None:
    from .methods import gem_project
    from .nn import Gradient
    from .oracles import gem_project_enumeration

    rng = np.random.default_rng(99)
    for _ in range(n_problems):
        g = rng.standard_normal(8)
        G = rng.standard_normal((3, 8))
        proj, _ = gem_project(Gradient(g), [Gradient(row) for row in G], margin=0.0)
        ref = gem_project_enumeration(g, G)
        if np.abs(proj.values - ref).max() > 1e-8:
            raise AssertionError("dual solver and active-set enumeration disagree")


def _cmd_oracle_check(args) -> int:
    _check_metric_oracle()
    print("ok metric-oracle (200 random traces, windows 2/10/100/full)")
    _check_gradient_oracle()
    print("ok gradient-oracle (finite differences: cross-entropy, distillation, penalty)")
    _check_gem_oracle()
    print("ok gem-projection (50 random problems vs active-set enumeration)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cleval",
        description="Continual-learning runs with per-iteration evaluation",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="run all seeds of a config and write CSV/SVG artifacts")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)
    p_grid = sub.add_parser("grid", help="grid search over config axes, scored by final ACC")
    p_grid.add_argument("config")
    p_grid.add_argument("grid")
    p_grid.set_defaults(func=_cmd_grid)
    p_plot = sub.add_parser("plot", help="render accuracy SVGs from a run directory")
    p_plot.add_argument("run_dir")
    p_plot.set_defaults(func=_cmd_plot)
    p_oracle = sub.add_parser("oracle-check", help="run the metric/gradient/projection oracle suites")
    p_oracle.set_defaults(func=_cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, AssertionError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except RunAborted as exc:
        print(json.dumps({"error": "RunAborted", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
