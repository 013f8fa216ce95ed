"""Deterministic counter-based random number generation.

All randomness in the package flows through Philox streams keyed by
(seed, *stream ids).  Philox is counter-based, so a stream for image i
can be created independently of the stream for image j: per-item seeding
is order-independent, which keeps parallel evaluation and shuffled
datasets bit-reproducible.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for a (seed, stream...) key.

    Identical arguments yield identical draw sequences on every platform.
    """
    ss = np.random.SeedSequence((seed & 0xFFFFFFFFFFFFFFFF, *stream))
    return np.random.Generator(np.random.Philox(seed=ss))
