"""Reproducible child seeds for independent, parallelizable tasks."""

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 32-bit seed for the task identified by ``(seed, *keys)``.

    Uses numpy's SeedSequence hashing, so neighbouring keys give
    statistically independent streams and the result never depends on the
    order in which tasks run.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])
