"""Deterministic RNG substreams.

All randomness in the toolkit flows through Philox (a counter-based,
splittable 64-bit generator with a published algorithm) keyed by
``SeedSequence((seed, *path))``. Keying by path components instead of
drawing from one shared stream makes results independent of execution
order: item 7's augmentation draws are the same whether items run
serially or in parallel.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path)."""
    ss = np.random.SeedSequence((int(seed), *(int(p) for p in path)))
    return np.random.Generator(np.random.Philox(ss))
