"""Pure numpy radix-2 FFT kernel (fallback for the compiled extension).

Implements the same contract as ``tfmeta._fftkernel``: an unnormalized
iterative Cooley-Tukey transform over the last axis, power-of-two lengths
only. The butterflies are vectorized across rows and blocks, so this path is
O(n log n) with a handful of numpy calls per stage rather than per element.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev = (rev << 1) | ((idx >> b) & 1)
    return rev


def fft_pow2(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized DFT (or inverse DFT) of each row; n must be a power of 2."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    out = x[..., _bit_reverse_indices(n)].copy()
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m >> 1
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        v = out.reshape(out.shape[:-1] + (n // m, m))
        left = v[..., :half]
        t = v[..., half:] * tw
        v[..., half:] = left - t
        v[..., :half] = left + t
        m <<= 1
    return out
