# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled radix-2 FFT kernel: the hot path for per-window spectra.

Same contract as ``tfmeta._fftpure``: unnormalized iterative Cooley-Tukey
over the last axis, power-of-two lengths only, batched across rows.
"""

import numpy as np

from libc.math cimport cos, sin

BACKEND = "compiled"

DEF TWO_PI = 6.283185307179586476925286766559


cdef void _fft_row(double complex[::1] row, Py_ssize_t n, double sign) noexcept:
    cdef Py_ssize_t i, j, k, m, half, start
    cdef double complex tmp, w, wm, t, u
    cdef double ang

    # in-place bit-reversal permutation
    j = 0
    for i in range(1, n):
        k = n >> 1
        while j & k:
            j ^= k
            k >>= 1
        j |= k
        if i < j:
            tmp = row[i]
            row[i] = row[j]
            row[j] = tmp

    m = 2
    while m <= n:
        half = m >> 1
        ang = sign * TWO_PI / m
        wm = cos(ang) + 1j * sin(ang)
        for start in range(0, n, m):
            w = 1.0 + 0.0j
            for k in range(half):
                u = row[start + k]
                t = w * row[start + k + half]
                row[start + k] = u + t
                row[start + k + half] = u - t
                w = w * wm
        m <<= 1


def fft_pow2(x, bint inverse=False):
    """Unnormalized DFT (or inverse DFT) of each row; n must be a power of 2."""
    arr = np.array(x, dtype=np.complex128, copy=True, order="C")
    cdef Py_ssize_t n = arr.shape[arr.ndim - 1]
    if n == 0 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    flat = arr.reshape(-1, n)
    cdef double complex[:, ::1] view = flat
    cdef double sign = 1.0 if inverse else -1.0
    cdef Py_ssize_t r
    for r in range(view.shape[0]):
        _fft_row(view[r], n, sign)
    return arr
