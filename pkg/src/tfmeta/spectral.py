"""Discrete Fourier transforms between vibration signals and their spectra.

Two routes are kept deliberately independent: :func:`dft_naive` evaluates the
transform definition directly in O(T^2) and acts as the correctness oracle,
while :func:`fft` is the fast path used everywhere else. Power-of-two lengths
run the radix-2 kernel straight; other lengths are handled exactly with the
Bluestein chirp-z construction, whose internal convolutions also run on the
radix-2 kernel.

At import the module picks the compiled kernel (``tfmeta._fftkernel``) when
the extension was built and otherwise falls back to the vectorized numpy
implementation. ``backend_name()`` reports which one is active.

Conventions: forward transforms are unnormalized, inverse transforms carry
the 1/T factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

try:  # compiled hot path, if built
    from . import _fftkernel as _kernel
except ImportError:  # pragma: no cover - depends on build environment
    from . import _fftpure as _kernel

from . import _fftpure


def backend_name() -> str:
    return _kernel.BACKEND


@dataclass
class Signal:
    """A real 1-D time series with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ContractError("signal must be a non-empty 1-D sequence")
        if self.sample_rate <= 0:
            raise ContractError("sample rate must be positive")

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class Spectrum:
    """Complex frequency bins of a length-T signal (forward-unnormalized)."""

    bins: np.ndarray
    origin_length: int
    sample_rate: float = 1.0

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 1 or self.bins.size != self.origin_length:
            raise ContractError("spectrum length must equal origin_length")


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


# ---------------------------------------------------------------------------
# array-level transforms (rows along the last axis)


def dft_naive_array(x: np.ndarray) -> np.ndarray:
    """Direct O(T^2) evaluation of X(w) = sum_t x(t) exp(-2i pi w t / T)."""
    x = np.asarray(x, dtype=np.complex128)
    t = x.shape[-1]
    k = np.arange(t)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / t)
    return x @ basis.T


def _bluestein(x: np.ndarray, inverse: bool) -> np.ndarray:
    """Exact arbitrary-length DFT via chirp-z, built on the radix-2 kernel."""
    n = x.shape[-1]
    sign = 1.0 if inverse else -1.0
    k = np.arange(n, dtype=np.int64)
    # k^2 mod 2n keeps the chirp phase argument small and precise
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    m = next_pow2(2 * n - 1)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv_kernel = np.zeros(m, dtype=np.complex128)
    conv_kernel[:n] = np.conj(chirp)
    conv_kernel[m - n + 1 :] = np.conj(chirp[1:][::-1])
    fa = _kernel.fft_pow2(a, False)
    fk = _kernel.fft_pow2(conv_kernel, False)
    conv = _kernel.fft_pow2(fa * fk, True) / m
    return chirp * conv[..., :n]


def fft_array(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Fast exact DFT of each row (any length). Unnormalized both ways."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n & (n - 1) == 0:
        return _kernel.fft_pow2(x, inverse)
    return _bluestein(x, inverse)


def magnitude_rows(x: np.ndarray) -> np.ndarray:
    """|FFT| of each real row, scaled by 2/T to amplitude-like units."""
    x = np.asarray(x, dtype=np.float64)
    t = x.shape[-1]
    return np.abs(fft_array(x)) * (2.0 / t)


# ---------------------------------------------------------------------------
# signal-level API


def dft_naive(x: Signal) -> Spectrum:
    """Oracle transform: direct evaluation of the DFT sum."""
    if not np.all(np.isfinite(x.samples)):
        raise ContractError("signal contains non-finite samples")
    return Spectrum(dft_naive_array(x.samples), len(x), x.sample_rate)


def fft(x: Signal) -> Spectrum:
    return Spectrum(fft_array(x.samples), len(x), x.sample_rate)


def ifft(spectrum: Spectrum) -> Signal:
    t = spectrum.origin_length
    back = fft_array(spectrum.bins, inverse=True) / t
    return Signal(back.real, spectrum.sample_rate)
