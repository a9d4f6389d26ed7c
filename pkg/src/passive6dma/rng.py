"""Deterministic substreams from a single experiment seed.

Every random quantity in a run is drawn from its own counter-based
substream keyed by (seed, purpose, indices...). Draws are therefore
independent across purposes and indices, and adding surfaces or users
never perturbs unrelated draws.
"""

from __future__ import annotations

import numpy as np

USER_PATHS = 1
BS_PATHS = 2
POSES = 3
REFLECTION_INIT = 4


def substream(seed: int, *tags: int) -> np.random.Generator:
    """Generator for the substream keyed by (seed, *tags)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(t) for t in tags))
    return np.random.Generator(np.random.Philox(ss))
