"""Task streams: synthetic class-incremental splits, permuted variants, IDX files.

A stream is an ordered list of locally stationary tasks. Task k covers the
iterations ``boundaries[k-2] < t <= boundaries[k-1]`` (1-based task ids), so
the last iteration of task k is exactly ``boundaries[k-1]``.
"""

from __future__ import annotations

import struct
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import Batch

__all__ = [
    "ALL",
    "SCENARIOS",
    "Dataset",
    "TaskSpec",
    "TaskStream",
    "EvalSubsampleConfig",
    "IdxFormatError",
    "make_split_synthetic",
    "make_permuted_stream",
    "make_mnist_split",
    "load_idx",
    "subsample_eval",
    "next_batch",
]

ALL = None  # sentinel for "use the full split"

SCENARIOS = ("class_incremental", "domain_incremental", "task_incremental")

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; the message names the byte offset."""


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled sample set (inputs N x D, integer labels N)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", np.ascontiguousarray(self.inputs, dtype=np.float64))
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.int64))
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ValueError(f"bad dataset shapes {self.inputs.shape} / {self.labels.shape}")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx])


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    train: Dataset
    eval_set: Dataset
    classes: frozenset[int]
    iters: int

    def __post_init__(self) -> None:
        if self.task_id < 1:
            raise ValueError("task ids are 1-based")
        if self.iters < 1:
            raise ValueError(f"task {self.task_id} needs iters >= 1")
        if not self.classes:
            raise ValueError(f"task {self.task_id} has an empty class set")


@dataclass(frozen=True)
class TaskStream:
    tasks: tuple[TaskSpec, ...]
    scenario: str
    boundaries: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        expected = []
        total = 0
        for task in self.tasks:
            total += task.iters
            expected.append(total)
        if list(self.boundaries) != expected:
            raise ValueError(f"boundaries {self.boundaries} inconsistent with task iters")

    @property
    def total_iters(self) -> int:
        return self.boundaries[-1]

    @property
    def n_classes(self) -> int:
        return max(max(t.classes) for t in self.tasks) + 1

    @property
    def input_dim(self) -> int:
        return self.tasks[0].train.inputs.shape[1]

    def task_of(self, t: int) -> int:
        """1-based task id owning iteration t (task k ends at boundaries[k-1])."""
        if t < 1 or t > self.total_iters:
            raise ValueError(f"iteration {t} outside stream of {self.total_iters} iterations")
        return bisect_left(self.boundaries, t) + 1

    def is_boundary(self, t: int) -> bool:
        return t in self.boundaries


@dataclass(frozen=True)
class EvalSubsampleConfig:
    """How evaluation sets are subsampled each round."""

    sample_size: int | None = 1000  # ALL when None
    resample_each_eval: bool = True
    source: str = "eval_split"

    def __post_init__(self) -> None:
        if self.sample_size is not None and self.sample_size < 1:
            raise ValueError(f"sample_size must be >= 1 or ALL, got {self.sample_size}")
        if self.source not in ("eval_split", "train_split"):
            raise ValueError(f"source must be eval_split or train_split, got {self.source!r}")


def _build_stream(task_data, scenario: str, iters_per_task: int) -> TaskStream:
    tasks = []
    boundaries = []
    total = 0
    for k, (train, eval_set, classes) in enumerate(task_data, start=1):
        total += iters_per_task
        boundaries.append(total)
        tasks.append(TaskSpec(k, train, eval_set, frozenset(classes), iters_per_task))
    return TaskStream(tuple(tasks), scenario, tuple(boundaries))


def make_split_synthetic(
    n_classes: int,
    dims: int,
    per_class_train: int,
    per_class_eval: int,
    n_tasks: int,
    seed: int,
    iters_per_task: int = 500,
    scenario: str = "class_incremental",
) -> TaskStream:
    """Class-incremental stream of unit-variance Gaussian clusters.

    Class means are drawn on a sphere of radius 4; classes are grouped
    sequentially over tasks (classes {0,1} in task 1, {2,3} in task 2, ...).
    Train and eval samples come from disjoint index ranges of each class draw.
    """
    if n_classes % n_tasks != 0:
        raise ValueError(f"n_classes={n_classes} not divisible by n_tasks={n_tasks}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), *b"synthetic-split"]))
    means = rng.standard_normal((n_classes, dims))
    means *= 4.0 / np.linalg.norm(means, axis=1, keepdims=True)
    per_task = n_classes // n_tasks
    task_data = []
    for k in range(n_tasks):
        classes = list(range(k * per_task, (k + 1) * per_task))
        tr_x, tr_y, ev_x, ev_y = [], [], [], []
        for c in classes:
            pts = means[c] + rng.standard_normal((per_class_train + per_class_eval, dims))
            tr_x.append(pts[:per_class_train])
            ev_x.append(pts[per_class_train:])
            tr_y.append(np.full(per_class_train, c))
            ev_y.append(np.full(per_class_eval, c))
        train = Dataset(np.concatenate(tr_x), np.concatenate(tr_y))
        eval_set = Dataset(np.concatenate(ev_x), np.concatenate(ev_y))
        task_data.append((train, eval_set, classes))
    return _build_stream(task_data, scenario, iters_per_task)


def make_permuted_stream(
    base_train: Dataset,
    base_eval: Dataset,
    n_tasks: int,
    seed: int,
    iters_per_task: int = 500,
) -> TaskStream:
    """Domain-incremental stream: task k applies a fixed input permutation.

    Task 1 is the identity; labels and the output space never change.
    """
    dims = base_train.inputs.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), *b"input-permutations"]))
    classes = sorted(set(base_train.labels.tolist()) | set(base_eval.labels.tolist()))
    task_data = []
    for k in range(n_tasks):
        perm = np.arange(dims) if k == 0 else rng.permutation(dims)
        train = Dataset(base_train.inputs[:, perm], base_train.labels)
        eval_set = Dataset(base_eval.inputs[:, perm], base_eval.labels)
        task_data.append((train, eval_set, classes))
    return _build_stream(task_data, "domain_incremental", iters_per_task)


def _read_be_u32(data: bytes, offset: int, path: Path) -> int:
    if offset + 4 > len(data):
        raise IdxFormatError(f"{path}: truncated header at offset {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def _load_idx_array(path: Path, expected_magic: int) -> np.ndarray:
    data = Path(path).read_bytes()
    magic = _read_be_u32(data, 0, path)
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    dims = [_read_be_u32(data, 4 + 4 * i, path) for i in range(ndim)]
    start = 4 + 4 * ndim
    count = int(np.prod(dims))
    if start + count > len(data):
        raise IdxFormatError(
            f"{path}: truncated data, expected {count} bytes from offset {start}, "
            f"file has {len(data) - start}"
        )
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=start).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label pair; pixels scaled to [0, 1]."""
    images = _load_idx_array(Path(images_path), IMAGES_MAGIC)
    labels = _load_idx_array(Path(labels_path), LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images_path}: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64))


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def mnist_available(mnist_dir) -> bool:
    d = Path(mnist_dir)
    return all((d / f).exists() for pair in MNIST_FILES.values() for f in pair)


def make_mnist_split(
    mnist_dir,
    n_tasks: int = 5,
    iters_per_task: int = 500,
    scenario: str = "class_incremental",
) -> TaskStream:
    """Split MNIST into n_tasks sequential digit groups ({0,1}, {2,3}, ...)."""
    d = Path(mnist_dir)
    train = load_idx(d / MNIST_FILES["train"][0], d / MNIST_FILES["train"][1])
    test = load_idx(d / MNIST_FILES["test"][0], d / MNIST_FILES["test"][1])
    if 10 % n_tasks != 0:
        raise ValueError(f"10 classes not divisible by n_tasks={n_tasks}")
    per_task = 10 // n_tasks
    task_data = []
    for k in range(n_tasks):
        classes = list(range(k * per_task, (k + 1) * per_task))
        tr_idx = np.isin(train.labels, classes)
        ev_idx = np.isin(test.labels, classes)
        task_data.append((train.subset(tr_idx), test.subset(ev_idx), classes))
    return _build_stream(task_data, scenario, iters_per_task)


def subsample_eval(
    task: TaskSpec, cfg: EvalSubsampleConfig, rng: np.random.Generator
) -> Dataset:
    """Uniform without-replacement sample from the configured split."""
    split = task.train if cfg.source == "train_split" else task.eval_set
    if cfg.sample_size is ALL:
        return split
    if cfg.sample_size > len(split):
        raise ValueError(
            f"sample_size {cfg.sample_size} exceeds split size {len(split)} "
            f"for task {task.task_id}"
        )
    idx = rng.choice(len(split), size=cfg.sample_size, replace=False)
    return split.subset(idx)


def next_batch(
    stream: TaskStream, t: int, batch_size: int, rng: np.random.Generator
) -> tuple[Batch, int]:
    """Uniform with-replacement batch from the task owning iteration t."""
    k = stream.task_of(t)
    train = stream.tasks[k - 1].train
    idx = rng.integers(0, len(train), size=batch_size)
    return Batch(train.inputs[idx], train.labels[idx]), k
