"""Portable deterministic random generation for reservoir construction.

Every federation participant regenerates the reservoir weights locally from
the shared seed; nothing is transmitted.  For that to work the generation
procedure must be reproducible bit for bit on any platform and in any
implementation language, so it is pinned here instead of delegating to a
library RNG:

* ``splitmix64`` (Steele, Lea, Flood) expands a 64-bit seed into generator
  state.  Its output mixer is :func:`mix64`.
* ``xoshiro256**`` (Blackman, Vigna) produces the random stream.

Stream derivation, fixed by contract: for stream id ``k``, run splitmix64
starting from state ``seed XOR mix64(k + 1)`` (mod 2**64) and take its first
four outputs as the xoshiro256** state words.  A uniform double in ``[0, 1)``
is the top 53 bits of one output word: ``(word >> 11) * 2.0**-53``.  A
uniform double in ``[-s, s]`` is ``s * (2 * u - 1)`` with ``u`` as above.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TO_UNIT = 2.0**-53


def mix64(z: int) -> int:
    """splitmix64 output mixer (finalizer) of a 64-bit word."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64 sequence; used only to seed the main generator."""

    def __init__(self, state: int):
        self._state = state & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return mix64(self._state)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """xoshiro256** 1.0 with the seeding procedure fixed in the module docs."""

    def __init__(self, state: list[int] | tuple[int, int, int, int]):
        s = [w & _MASK64 for w in state]
        if len(s) != 4:
            raise ValueError("xoshiro256** state is exactly four 64-bit words")
        if not any(s):
            # all-zero state is the one invalid fixed point
            s[0] = _GOLDEN
        self._s = s

    @classmethod
    def from_seed(cls, seed: int, stream: int = 0) -> "Xoshiro256StarStar":
        sm = SplitMix64(seed ^ mix64(stream + 1))
        return cls([sm.next_u64() for _ in range(4)])

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        out = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _TO_UNIT

    def randoms(self, n: int) -> np.ndarray:
        """Array of n uniform doubles in [0, 1), drawn sequentially."""
        out = np.empty(n)
        s0, s1, s2, s3 = self._s
        for i in range(n):
            out[i] = ((_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64) >> 11
            t = (s1 << 17) & _MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out * _TO_UNIT
