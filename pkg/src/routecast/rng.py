"""Deterministic 64-bit random generator used everywhere randomness matters.

The engine's provenance chain is meaningless with hidden nondeterminism,
so every stochastic operation (bootstrap resampling, stratified sampling)
draws from one named generator: xoshiro256** seeded through SplitMix64.
The exact algorithm, the seed-derivation scheme, and golden output vectors
live in ``docs/rng.md`` so ports in other languages can match draws
bit for bit.

Two implementations share the contract: the scalar :class:`Xoshiro256`
below, and a numpy-vectorized variant in :mod:`routecast.stats` that runs
many independent streams in lockstep. Both must produce identical draws
for identical (seed, stream-index) pairs.
"""

from __future__ import annotations

import hashlib
from typing import Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

T = TypeVar("T")


def _mix64(z: int) -> int:
    """SplitMix64 output scramble of one 64-bit state word."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def splitmix64(seed: int, n: int) -> list[int]:
    """First ``n`` outputs of the SplitMix64 stream seeded with ``seed``."""
    out = []
    state = seed & _MASK64
    for _ in range(n):
        state = (state + _GOLDEN) & _MASK64
        out.append(_mix64(state))
    return out


def derive_seed(seed: int, index: int) -> int:
    """Child seed for stream ``index`` of ``seed``.

    Defined as the ``index+1``-th SplitMix64 output of the parent seed, so
    children enumerate the parent's SplitMix64 stream.
    """
    if index < 0:
        raise ValueError("stream index must be >= 0")
    return _mix64((seed + (index + 1) * _GOLDEN) & _MASK64)


def derive_seed_label(seed: int, label: str) -> int:
    """Child seed for a named substream (e.g. one per metric).

    Folds the first eight bytes of ``sha256(label)`` into the parent seed,
    then scrambles; stable across platforms and releases.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    fold = int.from_bytes(digest[:8], "big")
    return _mix64((seed ^ fold) & _MASK64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256:
    """xoshiro256** with SplitMix64 state expansion from a 64-bit seed."""

    __slots__ = ("_s",)

    def __init__(self, seed: int) -> None:
        self._s = splitmix64(seed, 4)

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def randbelow(self, n: int) -> int:
        """Uniform draw in ``[0, n)`` as ``next_u64() mod n``.

        The modulo bias (< n / 2**64) is negligible for the pool sizes
        here and keeps the bounded draw trivially portable.
        """
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        return self.next_u64() % n

    def shuffle(self, items: list[T]) -> None:
        """In-place Fisher-Yates shuffle (descending index order)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: Sequence[T], k: int) -> list[T]:
        """Sample ``k`` items without replacement via partial Fisher-Yates.

        Positions ``0..k-1`` of a working index list are fixed one by one;
        the result preserves the draw order.
        """
        n = len(items)
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n} items")
        idx = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return [items[i] for i in idx[:k]]
