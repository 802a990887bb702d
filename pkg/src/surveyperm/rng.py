"""Counter-based random streams.

Every random draw in the package is addressed by ``(seed, index)``: the
generator for draw ``t`` is a Philox bit generator keyed from ``seed`` with
``t`` placed in the top word of its counter. Draws therefore never depend on
how many other draws were made before them, which keeps results identical
across thread counts and execution orders.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def philox_key(seed: int) -> np.ndarray:
    """Expand ``seed`` into the two-word Philox key."""
    return np.random.SeedSequence(check_seed(seed)).generate_state(2, np.uint64)


def stream(seed: int, index: int, key: np.ndarray | None = None) -> np.random.Generator:
    """Generator for draw ``index`` under ``seed``.

    Pass a precomputed ``key`` (from :func:`philox_key`) when calling this in
    a tight loop.
    """
    if key is None:
        key = philox_key(seed)
    counter = np.array([0, 0, 0, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for a position in a hierarchy, e.g. ``(replicate, mode)``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
