"""Accuracy-curve SVGs from the CSV traces.

One figure per evaluation task: seed-mean accuracy vs iteration with a ±SD
band, vertical lines at task starts, and a horizontal line at the seed-mean
final min-ACC.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .experiment import read_csv

__all__ = ["plot_curves"]


def _column(header: list[str], name: str, path) -> int:
    try:
        return header.index(name)
    except ValueError:
        raise ValueError(f"{path}: missing column {name!r}") from None


def _parse_float(cell: str, path, row: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ValueError(f"{path}: row {row}: bad float {cell!r}") from None


def plot_curves(trace_csv, metrics_csv, out_dir) -> list[Path]:
    trace_csv, metrics_csv, out_dir = Path(trace_csv), Path(metrics_csv), Path(out_dir)
    header, rows = read_csv(trace_csv)
    c_seed = _column(header, "run_seed", trace_csv)
    c_t = _column(header, "t", trace_csv)
    c_task = _column(header, "eval_task", trace_csv)
    c_acc = _column(header, "accuracy", trace_csv)

    # task -> seed -> (ts, accs)
    curves: dict[int, dict[int, tuple[list[int], list[float]]]] = defaultdict(dict)
    for i, row in enumerate(rows, start=2):
        task = int(row[c_task])
        seed = int(row[c_seed])
        ts, accs = curves[task].setdefault(seed, ([], []))
        ts.append(int(row[c_t]))
        accs.append(_parse_float(row[c_acc], trace_csv, i))

    m_header, m_rows = read_csv(metrics_csv)
    mc_seed = _column(m_header, "run_seed", metrics_csv)
    mc_t = _column(m_header, "t", metrics_csv)
    mc_task = _column(m_header, "current_task", metrics_csv)
    mc_min = _column(m_header, "min_acc", metrics_csv)

    # final min-ACC per seed (empty cells are absent values, not zeros)
    last_min: dict[int, float] = {}
    boundaries: dict[int, int] = {}
    for i, row in enumerate(m_rows, start=2):
        seed = int(row[mc_seed])
        if row[mc_min]:
            last_min[seed] = _parse_float(row[mc_min], metrics_csv, i)
        task = int(row[mc_task])
        boundaries[task] = max(boundaries.get(task, 0), int(row[mc_t]))
    min_acc_line = float(np.mean(list(last_min.values()))) if last_min else None
    task_starts = [boundaries[k] for k in sorted(boundaries)[:-1]] if boundaries else []

    paths = []
    for task in sorted(curves):
        per_seed = curves[task]
        grid = per_seed[min(per_seed)][0]
        aligned = [accs for ts, accs in per_seed.values() if ts == grid]
        arr = np.array(aligned)
        mean = arr.mean(axis=0)
        sd = arr.std(axis=0)

        fig, ax = plt.subplots(figsize=(6, 3.2))
        if len(grid) == 1:
            ax.plot(grid, mean, marker="o", color="tab:orange")
        else:
            ax.plot(grid, mean, color="tab:orange", lw=1.0)
            if len(aligned) > 1:
                ax.fill_between(grid, mean - sd, mean + sd, color="tab:orange", alpha=0.25, lw=0)
        for b in task_starts:
            ax.axvline(b, color="gray", ls=":", lw=0.8)
        if min_acc_line is not None:
            ax.axhline(min_acc_line, color="tab:blue", ls="--", lw=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel("accuracy")
        ax.set_title(f"evaluation task {task}")
        ax.set_ylim(-0.02, 1.02)
        path = out_dir / f"task_{task}_accuracy.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths
