"""Deterministic counter-based random streams.

All encoder randomness comes from a single Philox4x64 stream keyed by the
model seed.  Draw ``i`` of the stream is fixed once the seed is fixed, so any
stretch of draws can be replayed from ``(seed, position)`` alone:

- uniform double ``i`` is 64-bit output ``i`` of Philox4x64(key=seed), shifted
  right by 11 bits and scaled by 2**-53, giving values in [0, 1);
- standard normals come from uniform pairs ``(u1, u2)`` via the paired
  transform ``r = sqrt(-2*log1p(-u1))``, ``z0 = r*cos(2*pi*u2)``,
  ``z1 = r*sin(2*pi*u2)``; a request for ``k`` normals consumes
  ``2*ceil(k/2)`` uniforms and discards the trailing normal when k is odd.
  log1p/sqrt/cos/sin are numpy's float64 kernels (numpy's log1p can differ
  from C libm's by one ulp, so a bit-exact port must match numpy here).

Positions count consumed uniforms.  numpy's ``Philox.advance`` moves the
counter in 4-output blocks, so repositioning advances whole blocks and burns
the remainder.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    """Validate a 64-bit non-negative seed and return it as a plain int."""
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be in [0, 2**64): got {seed}")
    return seed


def _generator_at(seed: int, position: int) -> np.random.Generator:
    bitgen = np.random.Philox(key=seed)
    bitgen.advance(position // 4)
    gen = np.random.Generator(bitgen)
    if position % 4:
        gen.random(position % 4)  # burn within-block offset
    return gen


class UniformStream:
    """Resumable uniform stream with an explicit draw position.

    ``UniformStream(seed, p).uniforms(k)`` returns draws ``p .. p+k-1`` of the
    seed's stream, regardless of how the stream previously reached ``p``.
    """

    def __init__(self, seed: int, position: int = 0):
        self.seed = check_seed(seed)
        if position < 0:
            raise ValueError("stream position must be non-negative")
        self.position = int(position)
        self._gen = _generator_at(self.seed, self.position)

    def uniforms(self, count: int) -> np.ndarray:
        """Next ``count`` uniform doubles in [0, 1)."""
        if count < 0:
            raise ValueError("count must be non-negative")
        out = self._gen.random(count)
        self.position += count
        return out

    def normals(self, count: int) -> np.ndarray:
        """Next ``count`` standard normals via the paired transform."""
        if count < 0:
            raise ValueError("count must be non-negative")
        pairs = (count + 1) // 2
        u = self.uniforms(2 * pairs)
        # u in [0, 1) makes 1 - u1 strictly positive, so the log is finite.
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = TWO_PI * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:count]

    def phases(self, count: int) -> np.ndarray:
        """Next ``count`` phase offsets, uniform on [0, 2*pi)."""
        return TWO_PI * self.uniforms(count)
