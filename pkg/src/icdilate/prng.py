"""SplitMix64 stream and the two weight distributions.

The generator is pinned by the container format so that identical seeds
produce identical files anywhere: state advances by the 64-bit golden
gamma and each output is finalized with the standard SplitMix64 mixer.
Unit doubles take the top 53 bits; gaussians come from Box-Muller pairs.

Golden vector (seed = 1), frozen in the format document and the tests:

    u64:    0x910a2dec89025cc1, 0xbeeb8da1658eec67,
            0xf893a2eefb32555e, 0x71c18690ee42c90b
    unit:   0.5665615751722809, 0.7457817572627011,
            0.9710027535867962, 0.4443592170557721
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["SplitMix64", "Uniform", "Gaussian", "fill"]

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self._state = seed & _MASK
        self._spare: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK
        x = self._state
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
        return x ^ (x >> 31)

    def unit(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, a: float) -> float:
        return a * (2.0 * self.unit() - 1.0)

    def gaussian(self, sigma: float) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return sigma * z
        u1 = self.unit()
        u2 = self.unit()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return sigma * (r * math.cos(2.0 * math.pi * u2))


@dataclass(frozen=True)
class Uniform:
    a: float

    def draw(self, rng: SplitMix64) -> float:
        return rng.uniform(self.a)

    def to_dict(self) -> dict:
        return {"kind": "uniform", "a": self.a}


@dataclass(frozen=True)
class Gaussian:
    sigma: float

    def draw(self, rng: SplitMix64) -> float:
        return rng.gaussian(self.sigma)

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "sigma": self.sigma}


def fill(rng: SplitMix64, shape: tuple[int, ...], dist: Uniform | Gaussian) -> np.ndarray:
    """Row-major float32 tensor drawn from one stream."""
    n = int(np.prod(shape)) if shape else 1
    flat = np.empty(n, dtype=np.float32)
    for i in range(n):
        flat[i] = dist.draw(rng)
    return flat.reshape(shape)
