"""Utility functions that aren't limited to any planner stage."""
from typing import Union

import numpy as np

Seed = Union[int, np.random.SeedSequence]
"""Seed Type: a base integer seed or an already derived seed sequence"""

# Independent random streams derived from one scenario/run seed.
DEMAND_STREAM = 0
HEURISTIC_STREAM = 1
ROUTING_STREAM = 2
HOST_STREAM = 3


def derive_seed(seed: Seed, *keys: int) -> np.random.SeedSequence:
    """
    Returns the seed sequence addressed by `keys` below `seed`.

    The derivation only depends on the key path, never on how many draws
    were consumed elsewhere, so concurrent workers reproduce sequential runs.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys)
        )
    return np.random.SeedSequence(int(seed), spawn_key=tuple(keys))


def make_rng(seed: Seed) -> np.random.Generator:
    """Returns a numpy Generator for an integer seed or a seed sequence"""
    return np.random.default_rng(seed)
