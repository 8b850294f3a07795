"""Deterministic seeded randomness.

Every stochastic component owns an `Rng` derived from the run seed plus a
path of labels (round index, client id, purpose tag, ...). Streams are
backed by Philox, a counter-based generator, so the same seed and the same
call sequence give the same numbers on every platform, and sibling streams
are statistically independent regardless of scheduling order.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .exceptions import ConfigError


def _key_to_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ConfigError(f"rng key parts must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        digest = hashlib.blake2s(part.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big")
    raise ConfigError(f"rng key parts must be int or str, got {type(part).__name__}")


class Rng:
    """Seeded random stream with hierarchical derivation."""

    def __init__(self, seed: int, key: tuple = ()):
        if not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        self.seed = int(seed)
        self.key = tuple(key)
        entropy = [self.seed] + [_key_to_int(p) for p in self.key]
        self.gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

    def derive(self, *key_parts) -> "Rng":
        """Child stream at `key + key_parts`; independent of calls made on self."""
        return Rng(self.seed, self.key + key_parts)

    # Thin pass-throughs for the draws the simulator actually uses.
    def random(self, size=None):
        return self.gen.random(size)

    def uniform(self, low, high, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self.gen.choice(a, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"
