"""Deterministic named random streams.

All randomness flows from one root seed.  Independent tasks (per structure,
per chain, per held-out row) derive their own generator from the root seed
and a path of names, so results do not depend on scheduling order.
"""

import hashlib

import numpy as np


def derive_seed(root_seed, *path):
    """A 128-bit seed from the root seed and a name path."""
    key = repr((int(root_seed),) + tuple(path)).encode()
    digest = hashlib.blake2b(key, digest_size=16).digest()
    return int.from_bytes(digest, "little")


def derive_rng(root_seed, *path):
    """A numpy Generator bound to (root_seed, *path)."""
    return np.random.default_rng(derive_seed(root_seed, *path))


def spawn(rng, n):
    """Split an existing generator into n child generators."""
    seeds = rng.integers(0, 2**63 - 1, size=n)
    return [np.random.default_rng(int(s)) for s in seeds]
