"""Deterministic 64-bit seed derivation.

``derive_seed(base, *keys)`` folds each key into the state with FNV-1a
(strings are utf-8 encoded, ints as 8 little-endian bytes) and finishes with
a splitmix64 round. The result is masked to 63 bits so it fits a torch
generator seed. It depends only on the values passed, never on call order.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def fnv1a64(data: bytes, h: int = FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def _bytes(k) -> bytes:
    if isinstance(k, str):
        return b"s" + k.encode()
    return b"i" + (int(k) & MASK64).to_bytes(8, "little")


def derive_seed(base: int, *keys) -> int:
    h = fnv1a64(_bytes(base))
    for k in keys:
        h = fnv1a64(_bytes(k), h)
    return splitmix64(h) & ((1 << 63) - 1)
