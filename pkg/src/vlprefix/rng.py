"""Deterministic, splittable random number generation.

Built on numpy's Philox counter-based bit generator so that streams are
reproducible across platforms and child streams can be derived from string
labels without any ordering dependence between siblings.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Seeded counter-based generator with named, order-independent children."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def derive(self, label: str) -> "Rng":
        """Child stream addressed by label; independent of sibling draw order."""
        return Rng(_label_seed(self.seed, label))

    def normal(self, shape, std: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, std, size=shape)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integer(self, low: int, high: int) -> int:
        """One integer in [low, high)."""
        return int(self._gen.integers(low, high))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, items):
        return items[self.integer(0, len(items))]
