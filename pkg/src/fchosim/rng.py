"""Named random substreams derived from one master seed.

Each purpose (drop, motion, shadow, fading) gets its own stream keyed by
``(master seed, purpose, index)`` so toggling one feature never shifts the
draws of another.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {"drop": 1, "motion": 2, "shadow": 3, "fading": 4}


def substream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    key = (PURPOSES[purpose], int(index))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
