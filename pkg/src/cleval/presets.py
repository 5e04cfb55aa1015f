"""Canned experiment configurations for the headline runs.

The replay stability-gap run follows the split-digit regime when the MNIST
files are available (5 tasks, MLP 2x400, lr 0.01, alpha 0.3, batch 256,
buffer 1000, per-iteration evaluation on 1000-sample subsets). Without the
files it falls back to a synthetic split with the same method settings: ten
unit-variance Gaussian classes with means on a radius-4 sphere in a
low-dimensional input space, where task transitions interfere strongly enough
to reproduce the transient post-boundary accuracy drops.
"""

from __future__ import annotations

from dataclasses import replace

from .config import RunConfig
from .streams import mnist_available

__all__ = [
    "stability_gap_config",
    "finetune_collapse_config",
    "GAP_SEEDS",
]

GAP_SEEDS = (0, 1, 2, 3, 4)


def stability_gap_config(mnist_dir: str = "data/mnist", rho_eval: int = 1) -> RunConfig:
    """Replay run that exhibits the transient post-boundary forgetting."""
    if mnist_available(mnist_dir):
        return RunConfig(
            dataset="mnist_split",
            mnist_dir=str(mnist_dir),
            n_tasks=5,
            iters_per_task=500,
            batch_size=256,
            method="er",
            alpha=0.3,
            lr=0.01,
            momentum=0.9,
            buffer_capacity=1000,
            rho_eval=rho_eval,
            eval_subsample=1000,
            hidden_units=400,
            hidden_layers=2,
            seeds=GAP_SEEDS,
            output_dir="stability_gap_mnist",
        )
    return RunConfig(
        dataset="synthetic_split",
        n_tasks=5,
        iters_per_task=200,
        batch_size=256,
        method="er",
        alpha=0.3,
        lr=0.01,
        momentum=0.9,
        buffer_capacity=1000,
        rho_eval=rho_eval,
        eval_subsample=1000,
        hidden_units=400,
        hidden_layers=2,
        synth_classes=10,
        synth_dims=4,
        synth_train_per_class=500,
        synth_eval_per_class=500,
        seeds=GAP_SEEDS,
        output_dir="stability_gap_synthetic",
    )


def finetune_collapse_config() -> RunConfig:
    """Class-incremental finetuning baseline with catastrophic forgetting."""
    return RunConfig(
        dataset="synthetic_split",
        n_tasks=5,
        iters_per_task=150,
        batch_size=128,
        method="finetune",
        lr=0.1,
        momentum=0.9,
        rho_eval=5,
        eval_subsample=200,
        hidden_units=100,
        hidden_layers=1,
        synth_classes=10,
        synth_dims=16,
        synth_train_per_class=300,
        synth_eval_per_class=200,
        seeds=GAP_SEEDS,
        output_dir="finetune_collapse",
    )


def gap_variant(base: RunConfig, rho_eval: int) -> RunConfig:
    return replace(base, rho_eval=rho_eval)
