"""Deterministic random streams.

All randomness in the package flows through named Philox streams. Philox is
a counter-based 64-bit generator, so a (seed, stream, subkey) triple fully
determines the sequence: independent consumers never share state and reruns
are byte-identical. The key layout is

    key = [seed, (stream_id << 32) | subkey]

with stream ids below. ``subkey`` distinguishes per-class pools or repeat
indices inside one logical stream.
"""

from __future__ import annotations

import numpy as np

STREAM_INIT = 0     # model parameter initialization
STREAM_SHUFFLE = 1  # mini-batch shuffling
STREAM_DATAGEN = 2  # synthetic data generation
STREAM_SELECT = 3   # stochastic selection methods (random, k-center init, sampling)

_MASK64 = (1 << 64) - 1


def stream(seed: int, stream_id: int, subkey: int = 0) -> np.random.Generator:
    """Return the generator for one named stream of ``seed``."""
    if not 0 <= subkey < (1 << 32):
        raise ValueError(f"subkey must fit in 32 bits, got {subkey}")
    key = [int(seed) & _MASK64, ((stream_id << 32) | subkey) & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))
