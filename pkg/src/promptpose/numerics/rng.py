"""Seeded random streams.

All randomness in the package flows through `Rng`, a thin wrapper around
numpy's PCG64 generator. PCG64 has a fixed, documented bitstream, so an
identical seed yields a bit-identical stream on every platform. Child streams
are derived with a SplitMix64 hash of (seed, index) rather than sequential
draws, which keeps parallel data generation order-independent.
"""

from __future__ import annotations

import numpy as np

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(v: int) -> int:
    """One SplitMix64 scrambling round (public-domain constants)."""
    v = (v + _SPLITMIX_GAMMA) & _MASK64
    v = ((v ^ (v >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    v = ((v ^ (v >> 27)) * 0x94D049BB133111EB) & _MASK64
    return v ^ (v >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """Mix a base seed with stream indices into a new 64-bit seed."""
    v = seed & _MASK64
    for idx in indices:
        v = splitmix64(v ^ (idx & _MASK64))
    return v


class Rng:
    """Deterministic random stream (PCG64 under a fixed 64-bit seed)."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *indices: int) -> "Rng":
        """Independent stream keyed by (seed, indices); order-free derivation."""
        return Rng(derive_seed(self.seed, *indices))

    def normal(self, shape, std: float = 1.0, dtype=np.float32) -> np.ndarray:
        return (self._gen.standard_normal(shape) * std).astype(dtype)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray | float:
        out = self._gen.uniform(low, high, shape)
        return out if shape is not None else float(out)

    def integers(self, low: int, high: int, shape=None):
        out = self._gen.integers(low, high, size=shape)
        return out if shape is not None else int(out)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]

    def shuffle(self, seq: list) -> None:
        self._gen.shuffle(seq)

    def random(self) -> float:
        return float(self._gen.random())
