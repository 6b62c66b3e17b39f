"""Seedable random source.

The stream is numpy's PCG64 bit generator; normal draws use numpy's ziggurat
sampler.  Both are part of numpy's stable-stream guarantees for a fixed seed,
so identical seeds and call orders reproduce bit-for-bit.
"""

import numpy as np

from .tensor import DTYPE


class Prng:
    """Thin, explicitly owned wrapper over ``numpy.random.Generator(PCG64)``."""

    def __init__(self, seed=0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def standard_normal(self, shape, dtype=DTYPE):
        return self._gen.standard_normal(shape, dtype=np.float64).astype(dtype)

    def uniform(self, low=0.0, high=1.0, shape=None, dtype=DTYPE):
        return self._gen.uniform(low, high, shape).astype(dtype)

    def integers(self, low, high=None, shape=None):
        return self._gen.integers(low, high, shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def spawn(self, key):
        """Independent child stream keyed by ``key`` (deterministic)."""
        return Prng(derive_seed(self.seed, key))


def derive_seed(seed, *keys):
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def standard_normal(shape, prng):
    """I.i.d. N(0, 1) float32 draws of the given shape."""
    return prng.standard_normal(shape)
