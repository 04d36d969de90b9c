"""Seedable splitmix64-based random number generation.

All stochastic pieces of the library (noise inputs, weight init, k-space
noise, sigma sampling, validation-line draws) go through this generator so
that every artifact is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, tag: str) -> int:
    """Deterministically derive an independent child seed from (seed, tag)."""
    h = seed & 0xFFFFFFFFFFFFFFFF
    for ch in tag.encode():
        h = int(_mix(np.uint64(((h ^ ch) * int(_GOLDEN)) & 0xFFFFFFFFFFFFFFFF)))
    return h


class SplitMix64:
    """Counter-based splitmix64 stream of uniform/gaussian variates."""

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = np.uint64(0)

    def _raw(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            idx = self._counter + np.arange(1, n + 1, dtype=np.uint64)
            self._counter += np.uint64(n)
            return _mix(self._seed + idx * _GOLDEN)

    def uniform(self, shape) -> np.ndarray:
        """i.i.d. U[0, 1) as float64 with 53-bit mantissas."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def normal(self, shape, sigma: float = 1.0) -> np.ndarray:
        """i.i.d. N(0, sigma^2) via Box-Muller."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = np.maximum(self.uniform(m), 2.0**-53)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return (sigma * z[:n]).reshape(shape)
