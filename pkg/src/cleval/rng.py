"""Named, independent random streams derived from a single run seed."""

from __future__ import annotations

import numpy as np


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for one named consumer (init, batches, method, eval/...).

    Streams with different names never share state, so e.g. a method drawing
    replay batches cannot perturb the training-batch sequence.
    """
    if seed < 0:
        raise ValueError(f"seed must be >= 0, got {seed}")
    entropy = [int(seed), *name.encode("utf-8")]
    return np.random.default_rng(np.random.SeedSequence(entropy))
