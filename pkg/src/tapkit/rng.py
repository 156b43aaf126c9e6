"""Deterministic, splittable random streams.

Everything random in the toolkit flows through an :class:`RngStream` so that
a single root seed reproduces the full pipeline bit-for-bit: weight init,
batch shuffles, dropout masks, element sampling, and synthetic data. Streams
are backed by the Philox counter-based generator, which produces the same
sequence on every platform, and children are derived by hashing the parent
key with a label, so derivation is independent of draw order.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64"


class RngStream:
    """Seeded random stream with stable child derivation."""

    __slots__ = ("seed", "_key", "_gen")

    algorithm = ALGORITHM

    def __init__(self, seed: int, _key: bytes | None = None):
        self.seed = int(seed)
        if _key is None:
            _key = b"tapkit:" + self.seed.to_bytes(8, "little", signed=True)
        self._key = _key
        philox_key = int.from_bytes(hashlib.sha256(_key).digest()[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=philox_key))

    def child(self, label: object) -> "RngStream":
        """Derive an independent stream; same (seed, label) -> same stream."""
        material = self._key + b"/" + str(label).encode("utf-8")
        return RngStream(self.seed, _key=hashlib.sha256(material).digest())

    # thin passthroughs to the underlying generator

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, algorithm={self.algorithm!r})"
