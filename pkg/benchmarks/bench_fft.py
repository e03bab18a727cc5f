"""Benchmark the compiled FFT kernel against the pure numpy fallback.

The per-window transform is the hot kernel of the pipeline: every augmented
view and every frequency-branch forward pass runs one. This script times
both backends on representative shapes and prints the speedup.

Usage:
    python benchmarks/bench_fft.py [--repeats 7]
"""

import argparse
import time

import numpy as np

from tfmeta import _fftpure


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    try:
        from tfmeta import _fftkernel
    except ImportError:
        _fftkernel = None
        print("compiled kernel not built; timing the pure backend only")

    rng = np.random.default_rng(0)
    cases = [
        ("single window 2048", rng.standard_normal((1, 2048))),
        ("view batch 80 x 2048", rng.standard_normal((80, 2048))),
        ("long batch 640 x 2048", rng.standard_normal((640, 2048))),
        ("short windows 80 x 256", rng.standard_normal((80, 256))),
    ]

    header = f"{'case':<24}{'pure (ms)':>12}{'compiled (ms)':>15}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, arr in cases:
        x = arr.astype(np.complex128)
        t_pure = best_of(lambda: _fftpure.fft_pow2(x), args.repeats) * 1e3
        if _fftkernel is not None:
            t_fast = best_of(lambda: _fftkernel.fft_pow2(x), args.repeats) * 1e3
            err = np.max(np.abs(_fftkernel.fft_pow2(x) - _fftpure.fft_pow2(x)))
            assert err < 1e-9, f"backends disagree: {err}"
            print(f"{name:<24}{t_pure:>12.3f}{t_fast:>15.3f}{t_pure / t_fast:>9.1f}x")
        else:
            print(f"{name:<24}{t_pure:>12.3f}{'-':>15}{'-':>10}")


if __name__ == "__main__":
    main()
