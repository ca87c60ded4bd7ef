"""Portable seeded sampling for initial conditions.

The generator is SplitMix64, chosen because it is a few lines in any language
and therefore lets other implementations reproduce the same initial
conditions bit for bit:

    state <- state + 0x9E3779B97F4A7C15            (mod 2**64)
    z <- state
    z <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (mod 2**64)
    z <- (z ^ (z >> 27)) * 0x94D049BB133111EB      (mod 2**64)
    output z ^ (z >> 31)

Uniform doubles are ``(output >> 11) * 2**-53`` in [0, 1).  Standard normals
come from Box-Muller on consecutive uniforms ``u1, u2``:
``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` then ``... * sin(2 pi u2)``, in that
order.  A point on the sphere of radius R in R^n takes the next n normals
and scales their normalised vector by R.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MASK:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.state = int(seed)
        self._spare = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1, u2 = self.uniform(), self.uniform()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def sphere(self, n: int, radius: float = 1.0) -> np.ndarray:
        while True:
            g = np.array([self.normal() for _ in range(n)])
            norm = float(np.linalg.norm(g))
            if norm > 0.0:
                return radius * g / norm


def sphere_points(seed: int, n_points: int, dim: int, radius: float) -> np.ndarray:
    """``n_points`` initial conditions on the sphere of given radius, row i = run i."""
    gen = SplitMix64(seed)
    return np.array([gen.sphere(dim, radius) for _ in range(n_points)])
