"""Seeded time- and frequency-domain augmentations for vibration windows.

Each op maps a Signal to a new Signal of the same length and is
deterministic given its seed (an integer or a numpy Generator).
:func:`sample_views` composes randomly chosen ops per view, tagging every
view with its source-sample index, which later serves as the pseudo-label
for instance discrimination.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .spectral import Signal, fft_array, next_pow2

KNOWN_OPS = ("warp", "flip", "time_noise", "freq_mask", "freq_noise")


@dataclass
class AugPolicy:
    """Which ops may fire, their parameter ranges, and the base seed.

    Every op in ``ops`` fires independently with ``op_probability`` per
    view; a view that would receive no op redraws until at least one fires.
    """

    ops: tuple[str, ...] = KNOWN_OPS
    op_probability: float = 0.5
    warp_scale_range: tuple[float, float] = (0.5, 2.0)
    warp_segment_range: tuple[float, float] = (0.1, 0.5)
    noise_scale: float = 0.05  # sigma as a fraction of std(x)
    mask_fraction_range: tuple[float, float] = (0.05, 0.15)
    crop_length: int | None = None  # None keeps the full window
    seed: int = 0

    def __post_init__(self):
        self.ops = tuple(self.ops)
        unknown = set(self.ops) - set(KNOWN_OPS)
        if unknown:
            raise ContractError(f"unknown augmentation ops: {sorted(unknown)}")
        lo, hi = self.warp_scale_range
        if not (0.0 < lo <= hi):
            raise ContractError("warp scale range must lie in (0, inf)")
        if self.noise_scale < 0.0:
            raise ContractError("noise scale must be >= 0")
        mlo, mhi = self.mask_fraction_range
        if not (0.0 <= mlo <= mhi <= 1.0):
            raise ContractError("mask fraction range must lie in [0, 1]")
        if not (0.0 < self.op_probability <= 1.0):
            raise ContractError("op probability must lie in (0, 1]")


@dataclass
class AugmentedView:
    """One augmented signal plus the identity of the sample it came from."""

    signal: Signal
    source_index: int
    applied_ops: list = field(default_factory=list)


def window_warp(x: Signal, t_s: int, t_e: int, s: float) -> Signal:
    """Stretch or compress the segment [t_s, t_e) by factor s.

    The warped segment is resampled by linear interpolation, then the whole
    signal is linearly resampled back to the original length so batches stay
    rectangular. s == 1 returns the input exactly.
    """
    t = len(x)
    if not (0 <= t_s < t_e <= t):
        raise ContractError(f"segment [{t_s}, {t_e}) out of range for length {t}")
    if t_e - t_s < 2:
        raise ContractError("warp segment must contain at least 2 samples")
    if s <= 0:
        raise ContractError("warp scale must be positive")
    seg = x.samples[t_s:t_e]
    n = t_e - t_s
    n_warped = max(2, int(round(s * n)))
    warped = np.interp(np.linspace(0.0, n - 1, n_warped), np.arange(n), seg)
    stitched = np.concatenate([x.samples[:t_s], warped, x.samples[t_e:]])
    if stitched.size == t:
        out = stitched
    else:
        out = np.interp(
            np.linspace(0.0, stitched.size - 1, t), np.arange(stitched.size), stitched
        )
    return Signal(out, x.sample_rate)


def flip(x: Signal) -> Signal:
    """Invert the amplitude: x'(t) = -x(t)."""
    return Signal(-x.samples, x.sample_rate)


def time_noise(x: Signal, sigma: float, seed) -> Signal:
    """Add seeded Gaussian noise of standard deviation sigma."""
    if sigma < 0:
        raise ContractError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    return Signal(x.samples + rng.normal(0.0, sigma, size=len(x)), x.sample_rate)


def mask_band(x: Signal, start: int, width: int) -> Signal:
    """Zero ``width`` spectrum bins starting at ``start`` (plus the mirror band).

    Works on the power-of-two padded spectrum; the inverse transform is
    truncated back to the signal length. Mirroring the band keeps the
    output real.
    """
    t = len(x)
    p = next_pow2(t)
    if width <= 0:
        return Signal(x.samples.copy(), x.sample_rate)
    padded = np.zeros(p)
    padded[:t] = x.samples
    bins = fft_array(padded)
    band = np.arange(start, start + width) % p
    mirror = (p - band) % p
    bins[band] = 0.0
    bins[mirror] = 0.0
    back = fft_array(bins, inverse=True) / p
    return Signal(back[:t].real, x.sample_rate)


def freq_mask(x: Signal, mask_fraction: float, seed) -> Signal:
    """Zero a uniformly placed contiguous band covering ``mask_fraction`` of bins."""
    if not 0.0 <= mask_fraction <= 1.0:
        raise ContractError("mask fraction must lie in [0, 1]")
    p = next_pow2(len(x))
    width = int(np.ceil(mask_fraction * p))
    if width == 0:
        return Signal(x.samples.copy(), x.sample_rate)
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, p - width + 1))
    return mask_band(x, start, width)


def freq_noise(x: Signal, sigma: float, seed) -> Signal:
    """Add conjugate-symmetric complex Gaussian noise in the frequency domain.

    The per-bin variance is sigma^2 * T, so the perturbation carries the
    same energy as time-domain noise of standard deviation sigma.
    """
    if sigma < 0:
        raise ContractError("sigma must be >= 0")
    if sigma == 0.0:
        return Signal(x.samples.copy(), x.sample_rate)
    t = len(x)
    p = next_pow2(t)
    rng = np.random.default_rng(seed)
    noise = np.zeros(p, dtype=np.complex128)
    half = p // 2
    noise[0] = rng.normal(0.0, sigma * np.sqrt(p))
    if p > 1:
        noise[half] = rng.normal(0.0, sigma * np.sqrt(p))
    k = np.arange(1, half)
    comp = sigma * np.sqrt(p / 2.0)
    noise[k] = rng.normal(0.0, comp, size=k.size) + 1j * rng.normal(
        0.0, comp, size=k.size
    )
    noise[p - k] = np.conj(noise[k])
    padded = np.zeros(p)
    padded[:t] = x.samples
    bins = fft_array(padded) + noise
    back = fft_array(bins, inverse=True) / p
    return Signal(back[:t].real, x.sample_rate)


def _draw_ops(policy: AugPolicy, rng: np.random.Generator) -> list[str]:
    while True:
        chosen = [op for op in policy.ops if rng.random() < policy.op_probability]
        if chosen:
            return chosen


def _apply_op(op: str, x: Signal, policy: AugPolicy, rng: np.random.Generator):
    t = len(x)
    if op == "warp":
        lo, hi = policy.warp_segment_range
        seg_len = max(2, int(round(rng.uniform(lo, hi) * t)))
        seg_len = min(seg_len, t)
        t_s = int(rng.integers(0, t - seg_len + 1))
        s = float(rng.uniform(*policy.warp_scale_range))
        return window_warp(x, t_s, t_s + seg_len, s), {
            "t_s": t_s,
            "t_e": t_s + seg_len,
            "s": s,
        }
    if op == "flip":
        return flip(x), {}
    if op == "time_noise":
        sigma = policy.noise_scale * float(np.std(x.samples))
        return time_noise(x, sigma, rng), {"sigma": sigma}
    if op == "freq_mask":
        fraction = float(rng.uniform(*policy.mask_fraction_range))
        return freq_mask(x, fraction, rng), {"fraction": fraction}
    if op == "freq_noise":
        sigma = policy.noise_scale * float(np.std(x.samples))
        return freq_noise(x, sigma, rng), {"sigma": sigma}
    raise ContractError(f"unknown op {op!r}")


def sample_views(
    x: Signal, policy: AugPolicy, count: int, source_index: int = 0
) -> list[AugmentedView]:
    """Draw ``count`` independently augmented views of one signal.

    Each view derives its own random stream from (policy.seed, source_index,
    view index), so view generation is order-independent and reproducible.
    """
    if count < 1:
        raise ContractError("view count must be >= 1")
    if not policy.ops:
        raise ContractError("augmentation policy has no enabled ops")
    if source_index < 0:
        raise ContractError("source index must be >= 0")
    views = []
    for v in range(count):
        rng = np.random.default_rng(
            np.random.SeedSequence([policy.seed, source_index, v])
        )
        sig = x
        if policy.crop_length is not None and policy.crop_length < len(x):
            start = int(rng.integers(0, len(x) - policy.crop_length + 1))
            sig = Signal(
                x.samples[start : start + policy.crop_length].copy(), x.sample_rate
            )
        applied = []
        for op in _draw_ops(policy, rng):
            sig, params = _apply_op(op, sig, policy, rng)
            applied.append((op, params))
        views.append(AugmentedView(sig, source_index, applied))
    return views
