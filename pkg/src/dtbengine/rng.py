"""Counter-based splitmix64 random stream.

The generator is pinned down to the bit so that fixtures double as golden
files and can be regenerated identically by any implementation:

- state is the 64-bit seed ``s``; the k-th raw output (k = 1, 2, ...) is
  ``mix(s + k * 0x9E3779B97F4A7C15)`` where ``mix`` is the splitmix64
  finalizer::

      z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
      z ^= z >> 27;  z *= 0x94D049BB133111EB
      z ^= z >> 31

  (all arithmetic modulo 2**64)
- ``uniform`` values are ``(raw >> 11) * 2**-53`` (in [0, 1))
- ``normal`` values come from Box-Muller applied to consecutive uniform
  pairs: draw m = ceil(n/2) uniforms u1 then m uniforms u2;
  outputs interleave r*cos(2*pi*u2) and r*sin(2*pi*u2) with
  r = sqrt(-2*ln(max(u1, 2**-53)))
- ``integers(n, bound)`` is ``raw % bound`` (modulo bias is negligible for
  bound << 2**64 and irrelevant for fixture generation)

Because the stream is a pure function of (seed, counter) the array methods
are vectorized with numpy uint64 arithmetic, which wraps modulo 2**64.
"""

from __future__ import annotations

import numpy as np

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    """Deterministic stream of pseudo-random values for a 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._count = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            z = (np.uint64(self.seed) + idx * _GOLD) & _M64
            z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _M64
            z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _M64
            return z ^ (z >> np.uint64(31))

    def u64(self, n: int) -> np.ndarray:
        """Next n raw 64-bit outputs."""
        return self._raw(n)

    def uniforms(self, n: int) -> np.ndarray:
        """Next n doubles in [0, 1)."""
        return (self._raw(n) >> np.uint64(11)) * 2.0 ** -53

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def integers(self, n: int, bound: int) -> np.ndarray:
        """Next n integers in [0, bound)."""
        return (self._raw(n) % np.uint64(bound)).astype(np.int64)

    def normals(self, n: int) -> np.ndarray:
        """Next n standard-normal doubles (Box-Muller on uniform pairs)."""
        m = (n + 1) // 2
        u1 = np.maximum(self.uniforms(m), 2.0 ** -53)
        u2 = self.uniforms(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]
