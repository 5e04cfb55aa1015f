"""Worst-case stability/plasticity metrics as constant-memory streaming trackers.

Per evaluation task the tracker keeps: the accuracy right after the task was
learned, a running minimum over the post-learning range, and per window size a
monotonic deque over the last ``w - 1`` accuracy points. Windowed forgetting is
the largest in-window drop seen so far, windowed plasticity the largest rise;
both are floored at zero. ``oracle_wf_wp`` is the quadratic-time pair scan the
streaming path is tested against.

``None`` stands for an absent value (metric not defined yet) everywhere; absent
values must never be coerced to 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "EvalRecord",
    "MetricReport",
    "TaskTracker",
    "MetricState",
    "wc_acc",
    "acc_final",
    "oracle_wf_wp",
    "MINACC_RANGES",
]

MINACC_RANGES = ("post_learned", "eq2_literal")


@dataclass(frozen=True)
class EvalRecord:
    """One (iteration, evaluation task, accuracy) measurement."""

    t: int
    task: int
    accuracy: float
    n_samples: int

    def __post_init__(self) -> None:
        if self.t < 1 or self.task < 1:
            raise ValueError(f"t and task are 1-based, got t={self.t}, task={self.task}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {self.accuracy}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")


class _WindowTracker:
    """Running max in-window drop/rise for one window size, O(w) memory."""

    __slots__ = ("w", "wf", "wp", "_maxq", "_minq")

    def __init__(self, w: int) -> None:
        if w < 2:
            raise ValueError(f"window size must be >= 2, got {w}")
        self.w = w
        self.wf = 0.0
        self.wp = 0.0
        self._maxq: deque[tuple[int, float]] = deque()  # values non-increasing
        self._minq: deque[tuple[int, float]] = deque()  # values non-decreasing

    def push(self, pos: int, acc: float) -> None:
        lo = pos - self.w + 1  # oldest position still pairable with pos
        maxq, minq = self._maxq, self._minq
        while maxq and maxq[0][0] < lo:
            maxq.popleft()
        while minq and minq[0][0] < lo:
            minq.popleft()
        if maxq:
            drop = maxq[0][1] - acc
            if drop > self.wf:
                self.wf = drop
        if minq:
            rise = acc - minq[0][1]
            if rise > self.wp:
                self.wp = rise
        while maxq and maxq[-1][1] <= acc:
            maxq.pop()
        maxq.append((pos, acc))
        while minq and minq[-1][1] >= acc:
            minq.pop()
        minq.append((pos, acc))
        # keep only positions pairable with pos+1 so memory stays <= w-1
        nxt = pos - self.w + 2
        while maxq[0][0] < nxt:
            maxq.popleft()
        while minq[0][0] < nxt:
            minq.popleft()

    def queue_lengths(self) -> tuple[int, int]:
        return len(self._maxq), len(self._minq)


class TaskTracker:
    """Constant-memory state for one evaluation task."""

    def __init__(self, task: int, window_sizes: Sequence[int]) -> None:
        self.task = task
        self.learned_at: int | None = None
        self.acc_at_learned: float | None = None
        self.running_min: float | None = None
        self.last_acc: float | None = None
        self.last_t = 0
        self.min_range_start: int | None = None  # records with t > this count
        self._pos = 0
        self._windows = {w: _WindowTracker(w) for w in window_sizes}

    def update(self, record: EvalRecord) -> None:
        if record.task != self.task:
            raise ValueError(f"record for task {record.task} fed to tracker {self.task}")
        if record.t <= self.last_t:
            raise ValueError(
                f"records must arrive with strictly increasing t for task {self.task}: "
                f"{record.t} after {self.last_t}"
            )
        self.last_t = record.t
        self.last_acc = record.accuracy
        self._pos += 1
        for wt in self._windows.values():
            wt.push(self._pos, record.accuracy)
        if self.min_range_start is not None and record.t > self.min_range_start:
            if self.running_min is None or record.accuracy < self.running_min:
                self.running_min = record.accuracy

    def wf(self, w: int) -> float:
        return self._windows[w].wf

    def wp(self, w: int) -> float:
        return self._windows[w].wp

    def queue_lengths(self, w: int) -> tuple[int, int]:
        return self._windows[w].queue_lengths()


@dataclass(frozen=True)
class MetricReport:
    """Metrics snapshot after one evaluation round (boundary fields optional)."""

    t: int
    current_task: int
    acc_current: float
    min_acc: float | None
    wc_acc: float | None
    wf: Mapping[int, float]
    wp: Mapping[int, float]
    acc: float | None = None
    forg: float | None = None


class MetricState:
    """All per-task trackers plus the aggregate metric queries."""

    def __init__(self, window_sizes: Sequence[int] = (10, 100), minacc_range: str = "post_learned") -> None:
        if minacc_range not in MINACC_RANGES:
            raise ValueError(f"minacc_range must be one of {MINACC_RANGES}, got {minacc_range!r}")
        self.window_sizes = tuple(window_sizes)
        self.minacc_range = minacc_range
        self.trackers: dict[int, TaskTracker] = {}

    def add_task(self, task: int, prev_boundary: int = 0) -> TaskTracker:
        """Register evaluation task ``task``; ``prev_boundary`` is |T_{task-1}|."""
        if task in self.trackers:
            raise ValueError(f"evaluation task {task} already added")
        tracker = TaskTracker(task, self.window_sizes)
        if self.minacc_range == "eq2_literal":
            tracker.min_range_start = prev_boundary
        self.trackers[task] = tracker
        return tracker

    def mark_learned(self, task: int, t: int, accuracy: float) -> None:
        """Record the boundary accuracy A(E_task, f_{|T_task|})."""
        tracker = self.trackers[task]
        tracker.learned_at = t
        tracker.acc_at_learned = accuracy
        if self.minacc_range == "post_learned":
            tracker.min_range_start = t

    def update(self, record: EvalRecord) -> None:
        self.trackers[record.task].update(record)

    def min_acc(self, current_task: int) -> float | None:
        """Mean running minimum over previous tasks; None while undefined."""
        mins = [
            tr.running_min
            for task, tr in self.trackers.items()
            if task < current_task and tr.running_min is not None
        ]
        if not mins:
            return None
        return float(np.mean(mins))

    def forg(self, current_task: int, fresh: Mapping[int, float]) -> float | None:
        """Mean boundary-to-now accuracy drop over tasks i < current_task."""
        if current_task <= 1:
            return None
        diffs = []
        for i in range(1, current_task):
            tracker = self.trackers[i]
            if tracker.acc_at_learned is None:
                raise ValueError(f"task {i} has no recorded boundary accuracy")
            if i not in fresh:
                raise ValueError(f"missing fresh accuracy for task {i}")
            diffs.append(tracker.acc_at_learned - fresh[i])
        return float(np.mean(diffs))

    def aggregate_wf_wp(self, w: int) -> tuple[float, float]:
        """Plain mean of per-task running WF/WP over all tasks added so far."""
        if not self.trackers:
            raise ValueError("no evaluation tasks added yet")
        wfs = [tr.wf(w) for tr in self.trackers.values()]
        wps = [tr.wp(w) for tr in self.trackers.values()]
        return float(np.mean(wfs)), float(np.mean(wps))


def wc_acc(acc_current: float, min_acc: float | None, k: int) -> float:
    """(1/k)*current + (1 - 1/k)*min over previous tasks; just current for k=1."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k == 1:
        return acc_current
    if min_acc is None:
        raise ValueError("min_acc must be present for k >= 2")
    return acc_current / k + (1.0 - 1.0 / k) * min_acc


def acc_final(fresh: Mapping[int, float], k: int) -> float:
    """Mean accuracy over evaluation tasks 1..k at a task boundary."""
    missing = [i for i in range(1, k + 1) if i not in fresh]
    if missing:
        raise ValueError(f"missing boundary accuracies for tasks {missing}")
    return float(np.mean([fresh[i] for i in range(1, k + 1)]))


def oracle_wf_wp(trace: Iterable[float], w: int) -> tuple[float, float]:
    """Brute-force max drop/rise over all pairs (m, n), m < n, n - m <= w - 1."""
    arr = np.asarray(list(trace), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("trace must be non-empty")
    wf = 0.0
    wp = 0.0
    for n in range(1, arr.size):
        lo = max(0, n - w + 1)
        prev = arr[lo:n]
        wf = max(wf, float(prev.max() - arr[n]))
        wp = max(wp, float(arr[n] - prev.min()))
    return wf, wp
