"""Named random sub-streams derived from a single master seed.

Every stochastic component asks for its own generator by a path such as
``("perm", 3)`` or ``("replicate", 7, "fit")``.  Streams with different
paths are statistically independent and do not depend on the order in which
they are requested, so running replicates or permutations concurrently
never changes the results.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "child_seed"]


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream indices must be non-negative")
        return int(part)
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def _sequence(seed, path) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        base = seed
        keys = tuple(base.spawn_key) + tuple(_key(p) for p in path)
        return np.random.SeedSequence(base.entropy, spawn_key=keys)
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))


def substream(seed, *path) -> np.random.Generator:
    """Return an independent generator for ``path`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, path)))


def child_seed(seed, *path) -> int:
    """Return a 32-bit integer seed for ``path``; used to seed compiled kernels."""
    return int(_sequence(seed, path).generate_state(1, dtype=np.uint32)[0])
