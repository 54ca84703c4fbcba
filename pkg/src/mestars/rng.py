"""Deterministic, splittable random streams.

Streams are backed by the counter-based Philox4x64 generator, keyed by
(seed, stream id), so the same pair always replays the same sequence and
distinct ids behave independently.  Normal draws use numpy's ziggurat
sampler; the generator name is echoed into result records.
"""

from __future__ import annotations

import numpy as np

GENERATOR_ID = "philox4x64"

_MASK64 = (1 << 64) - 1


def mix_seed(master: int, index: int) -> int:
    """Stable 64-bit mix of a master seed and a stream/run index.

    splitmix64 finalizer applied to master XOR index, so enlarging an
    ensemble never perturbs earlier streams.
    """
    z = (master ^ (index * 0x9E3779B97F4A7C15)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class RandomStream:
    """One owned stream; not safe to share across workers."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id)
        key = mix_seed(self.seed, self.stream_id)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, stream_id: int) -> "RandomStream":
        """Derive an independent child stream from this stream's seed."""
        return RandomStream(mix_seed(self.seed, self.stream_id ^ 0x5DEECE66D),
                            stream_id)

    def uniform(self, lo: float, hi: float, size=None):
        if not lo < hi:
            raise ValueError(f"uniform range invalid: [{lo}, {hi})")
        return self._gen.uniform(lo, hi, size=size)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size=size)

    def normal_pair(self, variance: float):
        """Two independent zero-mean normals with the given variance."""
        if variance <= 0:
            raise ValueError("variance must be positive")
        return self._gen.normal(0.0, np.sqrt(variance), size=2)

    def complex_normal(self, variance: float, size=None):
        """CSCG samples: total variance split evenly over re/im parts."""
        if variance <= 0:
            raise ValueError("variance must be positive")
        scale = np.sqrt(variance / 2.0)
        re = self._gen.normal(0.0, scale, size=size)
        im = self._gen.normal(0.0, scale, size=size)
        return re + 1j * im
