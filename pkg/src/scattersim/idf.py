"""Keyed index derivation: (security domain, line address) -> one index per way."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._siphash import siphash24_3w


@dataclass(frozen=True)
class CacheGeometry:
    """Number of ways and index bits; each way has ``2**b_indices`` slots."""

    n_ways: int
    b_indices: int

    def __post_init__(self):
        if self.n_ways < 1 or self.b_indices < 1:
            raise ValueError(f"invalid geometry {self}")
        if self.b_indices > 32:
            raise ValueError("b_indices > 32 is not supported")

    @property
    def n_indices(self) -> int:
        return 1 << self.b_indices

    def total_slots(self) -> int:
        return self.n_ways << self.b_indices


@njit(cache=True)
def _fill_rows(k0, k1, sdid, addrs, n_ways, b_indices, out):
    per_block = 64 // b_indices
    mask = np.uint64((1 << b_indices) - 1)
    for r in range(addrs.shape[0]):
        a = addrs[r]
        h = np.uint64(0)
        for w in range(n_ways):
            slot_in_block = w % per_block
            if slot_in_block == 0:
                h = siphash24_3w(k0, k1, sdid, a, np.uint64(w // per_block))
            out[r, w] = np.int64((h >> np.uint64(slot_in_block * b_indices)) & mask)


class Idf:
    """Hashing-variant index derivation function keyed with a 128-bit secret.

    Each (sdid, addr) pair is expanded with SipHash-2-4 into
    ``n_ways * b_indices`` pseudorandom bits (one 64-bit block per group of
    ``64 // b_indices`` ways), which are sliced into per-way indices.
    """

    def __init__(self, geometry: CacheGeometry, key: bytes | tuple[int, int]):
        if isinstance(key, (bytes, bytearray)):
            if len(key) != 16:
                raise ValueError("IDF key must be 16 bytes")
            key = (int.from_bytes(key[:8], "little"), int.from_bytes(key[8:], "little"))
        self.geometry = geometry
        self.key = (int(key[0]) & (2**64 - 1), int(key[1]) & (2**64 - 1))
        self._k0 = np.uint64(self.key[0])
        self._k1 = np.uint64(self.key[1])

    @classmethod
    def random(cls, geometry: CacheGeometry, rng: np.random.Generator) -> "Idf":
        k = rng.integers(0, 2**64, size=2, dtype=np.uint64)
        return cls(geometry, (int(k[0]), int(k[1])))

    def rows(self, sdid: int, addrs) -> np.ndarray:
        """Index matrix of shape ``(len(addrs), n_ways)``."""
        addrs = np.ascontiguousarray(addrs, dtype=np.uint64).reshape(-1)
        out = np.empty((addrs.shape[0], self.geometry.n_ways), dtype=np.int64)
        _fill_rows(self._k0, self._k1, np.uint64(sdid), addrs,
                   self.geometry.n_ways, self.geometry.b_indices, out)
        return out

    def indices(self, sdid: int, addr: int) -> np.ndarray:
        return self.rows(sdid, [addr])[0]

    def __repr__(self):
        return f"Idf({self.geometry}, key=<hidden>)"


def idf_indices(idf: Idf, sdid: int, addr: int) -> np.ndarray:
    return idf.indices(sdid, addr)
