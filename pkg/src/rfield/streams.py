"""Deterministic, keyed random streams.

Every source of randomness in the package draws from a counter-based
generator keyed by a tuple of integers (seed, image id, pixel id,
iteration, ...).  Streams for distinct keys are independent, and a stream
depends only on its key, never on call order or thread scheduling.
"""

import numpy as np

__all__ = ["stream"]


def stream(*key: int) -> np.random.Generator:
    """Return a Philox-backed generator keyed by the given integers."""
    if not key:
        raise ValueError("stream requires at least one key integer")
    words = np.random.SeedSequence(list(key)).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=words))
