"""Reproducible random streams.

Every random draw in the package comes from a generator keyed by
``(master_seed, *key)`` through :class:`numpy.random.SeedSequence`. Keys are
small integers naming the purpose of the stream (calibration half, sample
size, chunk index, ...), so results never depend on scheduling or on how
many workers are used.
"""

import zlib

import numpy as np

# purpose tags, first element of every key
CALIBRATION = 1
POWER = 2
RATE_PROBE = 3
SIMULATE = 4

# fixed chunk length for all batched Monte-Carlo loops; part of the seed contract
CHUNK = 10_000


def tag(name):
    """Stable non-negative integer for a string key."""
    return zlib.crc32(name.encode("utf-8"))


def stream(master_seed, *key):
    """Return a fresh generator for ``(master_seed, *key)``."""
    if master_seed < 0 or any(k < 0 for k in key):
        raise ValueError("seeds and stream keys must be non-negative integers")
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))


def chunks(total, size=CHUNK):
    """Yield ``(index, length)`` pairs covering ``total`` items."""
    for i, start in enumerate(range(0, total, size)):
        yield i, min(size, total - start)
