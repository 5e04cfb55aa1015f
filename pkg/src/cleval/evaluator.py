"""Training loop with per-iteration evaluation of all tasks seen so far.

Iteration t is post-update: the model evaluated at t already took step t.
Evaluation rounds happen every ``rho_eval`` iterations plus (by default) at
every task boundary; when rho does not divide a boundary the boundary round is
inserted as an extra round, never shifted. Boundary rounds evaluate the full
sets rather than subsamples: those measurements double as the inputs to the
task-based ACC/FORG summary, which is what makes the per-boundary bound
``wc_acc <= acc`` hold exactly instead of up to subsampling noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import EvalRecord, MetricReport, MetricState, acc_final, wc_acc
from .methods import MethodConfig, StepProbe, build_method
from .nn import ModelState, OptimizerState, forward, init_model, mlp_shapes
from .rng import stream_rng
from .streams import Dataset, EvalSubsampleConfig, TaskStream, next_batch, subsample_eval

__all__ = [
    "TrainConfig",
    "EvaluatorConfig",
    "BoundarySummary",
    "RunLog",
    "RunAborted",
    "run",
    "evaluate_snapshot",
    "eval_overhead_ratio",
]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 256
    hidden: tuple[int, ...] = (400, 400)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EvaluatorConfig:
    rho_eval: int = 1
    subsample: EvalSubsampleConfig = field(default_factory=EvalSubsampleConfig)
    window_sizes: tuple[int, ...] = (10, 100)
    force_boundary_eval: bool = True
    minacc_range: str = "post_learned"

    def __post_init__(self) -> None:
        if self.rho_eval < 1:
            raise ValueError(f"rho_eval must be >= 1, got {self.rho_eval}")
        if any(w < 2 for w in self.window_sizes):
            raise ValueError(f"window sizes must be >= 2, got {self.window_sizes}")


@dataclass(frozen=True)
class BoundarySummary:
    task: int
    t: int
    acc: float
    forg: float | None
    min_acc: float | None
    wc_acc: float | None
    wf: dict[int, float]
    wp: dict[int, float]


@dataclass
class RunLog:
    seed: int
    method: str
    eval_records: list[EvalRecord] = field(default_factory=list)
    metric_reports: list[MetricReport] = field(default_factory=list)
    probe_rows: list[tuple[int, StepProbe]] = field(default_factory=list)
    boundary_summaries: list[BoundarySummary] = field(default_factory=list)


class RunAborted(RuntimeError):
    """A module error stopped the run; the partial log is preserved."""

    def __init__(self, log: RunLog, cause: Exception) -> None:
        super().__init__(f"run aborted at iteration {len(log.probe_rows) + 1}: {cause}")
        self.partial_log = log


def evaluate_snapshot(
    model: ModelState,
    eval_sets: Sequence[tuple[int, Dataset, frozenset[int]]],
    scenario: str,
    t: int,
) -> list[EvalRecord]:
    """Accuracy of one immutable snapshot on each evaluation set.

    Ties at the argmax go to the lowest class index. Task-incremental runs
    mask logits outside the task's class set before the argmax; the other
    scenarios use the full output head.
    """
    records = []
    for task_id, ds, classes in eval_sets:
        if len(ds) == 0:
            raise ValueError(f"empty evaluation set for task {task_id}")
        logits = forward(model, ds.inputs)
        if scenario == "task_incremental":
            mask = np.full(logits.shape[1], -np.inf)
            mask[sorted(classes)] = 0.0
            logits = logits + mask
        pred = logits.argmax(axis=1)
        acc = float(np.mean(pred == ds.labels))
        records.append(EvalRecord(t=t, task=task_id, accuracy=acc, n_samples=len(ds)))
    return records


def eval_overhead_ratio(stream: TaskStream, k: int, rho_eval: int) -> float:
    """Evaluation rounds per training iteration budget for task k."""
    if not 1 <= k <= len(stream.tasks):
        raise ValueError(f"task {k} outside stream of {len(stream.tasks)} tasks")
    start = stream.boundaries[k - 2] if k >= 2 else 0
    return (stream.boundaries[k - 1] - start) / rho_eval


def run(
    stream: TaskStream,
    method_cfg: MethodConfig,
    train_cfg: TrainConfig,
    eval_cfg: EvaluatorConfig,
    seed: int,
) -> RunLog:
    """Train over the full stream, evaluating and logging as configured."""
    shapes = mlp_shapes(stream.input_dim, train_cfg.hidden, stream.n_classes)
    model = init_model(shapes, stream_rng(seed, "init"))
    opt = OptimizerState.fresh(train_cfg.lr, train_cfg.momentum, model.params.shape[0])
    method = build_method(method_cfg, stream)

    rng_batches = stream_rng(seed, "batches")
    rng_method = stream_rng(seed, "method")
    resample = eval_cfg.subsample.resample_each_eval
    eval_rngs: dict[int, np.random.Generator] = {}

    def eval_rng(task_id: int) -> np.random.Generator:
        if not resample:
            return stream_rng(seed, f"eval/task{task_id}")  # same draw every call
        if task_id not in eval_rngs:
            eval_rngs[task_id] = stream_rng(seed, f"eval/task{task_id}")
        return eval_rngs[task_id]

    state = MetricState(eval_cfg.window_sizes, eval_cfg.minacc_range)
    log = RunLog(seed=seed, method=method_cfg.name)
    full_source = "train" if eval_cfg.subsample.source == "train_split" else "eval"
    n_added = 0

    try:
        for t in range(1, stream.total_iters + 1):
            batch, k = next_batch(stream, t, train_cfg.batch_size, rng_batches)
            if k > n_added:
                prev_boundary = stream.boundaries[k - 2] if k >= 2 else 0
                state.add_task(k, prev_boundary)
                n_added = k
            model, opt, probe = method.step(model, opt, batch, rng_method)
            log.probe_rows.append((t, probe))

            boundary = stream.is_boundary(t)
            if t % eval_cfg.rho_eval == 0 or (boundary and eval_cfg.force_boundary_eval):
                snapshot = model.clone()
                eval_sets = []
                for i in range(1, k + 1):
                    task = stream.tasks[i - 1]
                    if boundary:
                        ds = task.train if full_source == "train" else task.eval_set
                    else:
                        ds = subsample_eval(task, eval_cfg.subsample, eval_rng(i))
                    eval_sets.append((i, ds, task.classes))
                records = evaluate_snapshot(snapshot, eval_sets, stream.scenario, t)
                for rec in records:
                    state.update(rec)
                log.eval_records.extend(records)

                acc_b = forg_b = None
                if boundary:
                    if full_source == "train":
                        full_eval = [(i, stream.tasks[i - 1].eval_set, stream.tasks[i - 1].classes) for i in range(1, k + 1)]
                        fresh = {r.task: r.accuracy for r in evaluate_snapshot(snapshot, full_eval, stream.scenario, t)}
                    else:
                        fresh = {r.task: r.accuracy for r in records}
                    state.mark_learned(k, t, fresh[k])
                    acc_b = acc_final(fresh, k)
                    forg_b = state.forg(k, fresh)

                acc_cur = records[k - 1].accuracy
                min_acc = state.min_acc(k)
                wc = wc_acc(acc_cur, min_acc, k) if (k == 1 or min_acc is not None) else None
                wf = {}
                wp = {}
                for w in eval_cfg.window_sizes:
                    wf[w], wp[w] = state.aggregate_wf_wp(w)
                report = MetricReport(
                    t=t,
                    current_task=k,
                    acc_current=acc_cur,
                    min_acc=min_acc,
                    wc_acc=wc,
                    wf=wf,
                    wp=wp,
                    acc=acc_b,
                    forg=forg_b,
                )
                log.metric_reports.append(report)
                if boundary:
                    log.boundary_summaries.append(
                        BoundarySummary(
                            task=k, t=t, acc=acc_b, forg=forg_b,
                            min_acc=min_acc, wc_acc=wc, wf=wf, wp=wp,
                        )
                    )
            if boundary:
                method.on_boundary(model, stream.tasks[k - 1], rng_method)
    except Exception as exc:
        raise RunAborted(log, exc) from exc
    return log
