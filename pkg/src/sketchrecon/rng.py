"""Seeded random-number streams.

All randomness in the package flows through generators created here; no
function touches numpy's global RNG state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["seed_stream", "child_seed"]


def seed_stream(seed: int, index: int = 0) -> np.random.Generator:
    """Return an independent generator for stream `index` of root `seed`.

    The mapping (seed, index) -> stream is fixed, so work split across
    indices (sketch draws per outer iteration, Monte-Carlo trials, sweep
    cells) is reproducible regardless of execution order.
    """
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(index))))


def child_seed(seed: int, index: int) -> int:
    """Derived integer seed for stream `index`, usable as a new root seed."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return int(np.random.SeedSequence((int(seed), int(index))).generate_state(1)[0])
