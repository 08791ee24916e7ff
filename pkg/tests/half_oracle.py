"""Independent bit-level binary16 encoder/decoder used as a rounding oracle."""

import numpy as np


def encode_half(x):
    """Round fp64 values to binary16 bit patterns (uint16), ties to even."""
    x = np.asarray(x, dtype=np.float64)
    bits = x.view(np.uint64)
    sign = (bits >> np.uint64(63)).astype(np.int64)
    exp = ((bits >> np.uint64(52)) & np.uint64(0x7FF)).astype(np.int64)
    man = (bits & np.uint64((1 << 52) - 1)).astype(np.int64)
    sig = man | (1 << 52)
    e = exp - 1023
    # shift that leaves 10 fraction bits (normal) or the subnormal grid
    shift = np.where(e >= -14, 42, 42 + (-14 - e))
    shift = np.minimum(shift, 60)
    src = np.where(e >= -14, man, sig)
    src = np.where(exp == 0, 0, src)  # fp64 subnormals are far below half range
    q = src >> shift
    rem = src & ((np.int64(1) << shift) - 1)
    half = np.int64(1) << (shift - 1)
    up = (rem > half) | ((rem == half) & ((q & 1) == 1))
    q = q + up
    h = np.where(e >= -14, ((e + 15) << 10) + q, q)
    h = np.where(exp == 0, 0, h)
    h = np.where((e > 15) | (h >= (31 << 10)), 31 << 10, h)
    h = np.where(exp == 0x7FF, 31 << 10, h)
    return ((sign << 15) | h).astype(np.uint16)


def decode_half(h):
    h = np.asarray(h, dtype=np.int64)
    sign = np.where(h >> 15, -1.0, 1.0)
    E = (h >> 10) & 31
    m = h & 1023
    val = np.where(E == 0, m * 2.0 ** -24, (1024 + m) * np.exp2(np.maximum(E, 1) - 25.0))
    val = np.where(E == 31, np.inf, val)
    return sign * val


def half_oracle(x):
    return decode_half(encode_half(x))
