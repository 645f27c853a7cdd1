"""SipHash-2-4 over three 64-bit message words, jitted for the cache kernels."""

import numpy as np
from numba import njit

_U = np.uint64
_C0 = _U(0x736F6D6570736575)
_C1 = _U(0x646F72616E646F6D)
_C2 = _U(0x6C7967656E657261)
_C3 = _U(0x7465646279746573)
_FF = _U(0xFF)
# final-word length tag for a 24 byte message
_LEN24 = _U(24 << 56)


@njit(inline="always")
def _rotl(x, b):
    return (x << _U(b)) | (x >> _U(64 - b))


@njit(inline="always")
def _round(v0, v1, v2, v3):
    v0 = v0 + v1
    v1 = _rotl(v1, 13)
    v1 ^= v0
    v0 = _rotl(v0, 32)
    v2 = v2 + v3
    v3 = _rotl(v3, 16)
    v3 ^= v2
    v0 = v0 + v3
    v3 = _rotl(v3, 21)
    v3 ^= v0
    v2 = v2 + v1
    v1 = _rotl(v1, 17)
    v1 ^= v2
    v2 = _rotl(v2, 32)
    return v0, v1, v2, v3


@njit(cache=True)
def siphash24_3w(k0, k1, m0, m1, m2):
    """SipHash-2-4 of the 24-byte little-endian message ``m0 || m1 || m2``."""
    v0 = _C0 ^ k0
    v1 = _C1 ^ k1
    v2 = _C2 ^ k0
    v3 = _C3 ^ k1
    for m in (m0, m1, m2, _LEN24):
        v3 ^= m
        v0, v1, v2, v3 = _round(v0, v1, v2, v3)
        v0, v1, v2, v3 = _round(v0, v1, v2, v3)
        v0 ^= m
    v2 ^= _FF
    for _ in range(4):
        v0, v1, v2, v3 = _round(v0, v1, v2, v3)
    return v0 ^ v1 ^ v2 ^ v3
