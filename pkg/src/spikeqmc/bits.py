"""Small bit-twiddling helpers shared by the oracles and the sampler."""

from __future__ import annotations

import numpy as np


def popcount(values: np.ndarray) -> np.ndarray:
    """Hamming weight of each entry of an unsigned integer array."""
    return np.bitwise_count(values)


def index_to_bits(indices: np.ndarray, num_bits: int) -> np.ndarray:
    """Expand integer state indices into a (len(indices), num_bits) 0/1 array.

    Bit i of the index is column i, so column order matches the shift
    convention index = sum_i bits[i] << i used throughout.
    """
    indices = np.asarray(indices, dtype=np.uint64)
    shifts = np.arange(num_bits, dtype=np.uint64)
    return ((indices[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)


def bits_to_index(bits: np.ndarray) -> int:
    """Inverse of index_to_bits for a single bit vector."""
    bits = np.asarray(bits).ravel()
    return int(np.sum(bits.astype(np.uint64) << np.arange(bits.size, dtype=np.uint64)))
