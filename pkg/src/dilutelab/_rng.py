"""Seed mixing and per-replica generators.

Every random draw in the package goes through :func:`replica_rng`, so a
result depends only on ``(seed, replica index)`` and never on how replicas
are scheduled across threads.
"""
import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix_seed(seed, *indices):
    """Fold integer indices into a 64-bit seed with a fixed hash."""
    h = splitmix64(int(seed) & _MASK)
    for i in indices:
        h = splitmix64(h ^ (int(i) & _MASK))
    return h


def replica_rng(seed, replica=0, stream=0):
    return np.random.Generator(np.random.PCG64(mix_seed(seed, replica, stream)))
