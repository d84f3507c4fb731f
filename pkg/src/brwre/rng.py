"""Seeding conventions.

Every stochastic routine takes an explicit integer seed and draws from
numpy's PCG64 bit generator.  Independent sub-streams come from
``SeedSequence.spawn`` so that results do not depend on how work is split.
"""

import numpy as np


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def child_rngs(seed: int, count: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]
