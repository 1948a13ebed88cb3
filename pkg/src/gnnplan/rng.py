"""Named random streams derived from one 64-bit seed.

Every consumer asks for its stream by name, so adding a new consumer never
shifts the numbers another one sees.
"""
import hashlib

import numpy as np


def _name_key(name):
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed, name, *extra):
    """Generator for ``(seed, name, *extra)``; ``extra`` are non-negative ints."""
    key = (_name_key(name),) + tuple(int(e) for e in extra)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
