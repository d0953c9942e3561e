"""Deterministic, position-addressable random streams.

Every random choice in a run (channel sampling phases, iteration waits,
sensor jitter) is drawn from a splitmix64 stream addressed by an integer
position, so two runs with the same seed are bit-identical regardless of
scheduling order, and the compiled and pure-Python channel kernels can
reproduce each other's draws exactly.
"""

from __future__ import annotations

import hashlib
import math

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """splitmix64 finalizer over 64-bit wrapping arithmetic."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_u64(seed: int, index: int) -> int:
    """index-th raw draw of the stream rooted at ``seed``."""
    return mix64((seed + (index + 1) * GAMMA) & MASK64)


def stream_u01(seed: int, index: int) -> float:
    """index-th draw mapped to [0, 1) using the top 53 bits."""
    return (stream_u64(seed, index) >> 11) * _INV_2_53


def derive_seed(root: int, *labels: object) -> int:
    """Fold labels (strings, ints) into a child seed, stable across processes."""
    h = mix64(root & MASK64)
    for label in labels:
        if isinstance(label, int):
            part = label & MASK64
        else:
            digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8)
            part = int.from_bytes(digest.digest(), "little")
        h = mix64((h ^ part) & MASK64)
    return h


class Stream:
    """Sequential view over a splitmix64 stream (one consumer, own counter)."""

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.index = 0

    def next_u01(self) -> float:
        v = stream_u01(self.seed, self.index)
        self.index += 1
        return v

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_u01()

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box-Muller; two draws per call, no cached spare, so the stream
        # position stays a pure function of the call count.
        u1 = self.next_u01()
        u2 = self.next_u01()
        if u1 <= 0.0:
            u1 = _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)
