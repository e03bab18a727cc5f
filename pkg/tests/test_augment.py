import numpy as np
import pytest

from tfmeta import augment
from tfmeta.errors import ContractError
from tfmeta.spectral import Signal, fft_array


def sig(samples, rate=1.0):
    return Signal(np.asarray(samples, dtype=float), rate)


def lin_interp(positions, values):
    """Independent piecewise-linear interpolation oracle (pure python)."""
    out = []
    for p in positions:
        i = int(np.floor(p))
        if i >= len(values) - 1:
            out.append(values[-1])
            continue
        frac = p - i
        out.append(values[i] * (1.0 - frac) + values[i + 1] * frac)
    return np.array(out)


# ---------------------------------------------------------------------------
# window warp


def test_warp_identity_scale_is_exact():
    x = np.random.default_rng(0).standard_normal(64)
    out = augment.window_warp(sig(x), 10, 30, 1.0)
    np.testing.assert_array_equal(out.samples, x)


def test_warp_ramp_hand_oracle():
    x = sig(np.arange(8.0))
    out = augment.window_warp(x, 2, 6, 2.0)
    assert len(out) == 8
    # stage 1: the 4-sample segment [2,3,4,5] becomes 8 points at 2 + 3k/7
    warped_seg = lin_interp(np.linspace(0.0, 3.0, 8), np.array([2.0, 3.0, 4.0, 5.0]))
    np.testing.assert_allclose(warped_seg, 2.0 + 3.0 * np.arange(8) / 7.0)
    # stage 2: stitched 12-point signal resampled back to 8 points
    stitched = np.concatenate([[0.0, 1.0], warped_seg, [6.0, 7.0]])
    expected = lin_interp(np.linspace(0.0, 11.0, 8), stitched)
    np.testing.assert_allclose(out.samples, expected, atol=1e-12)


def test_warp_preserves_length():
    rng = np.random.default_rng(5)
    for _ in range(25):
        t = int(rng.integers(16, 200))
        x = sig(rng.standard_normal(t))
        t_s = int(rng.integers(0, t - 2))
        t_e = int(rng.integers(t_s + 2, t + 1))
        s = float(rng.uniform(0.3, 3.0))
        assert len(augment.window_warp(x, t_s, t_e, s)) == t


def test_warp_degenerate_segment_rejected():
    x = sig(np.zeros(16))
    with pytest.raises(ContractError):
        augment.window_warp(x, 4, 5, 2.0)
    with pytest.raises(ContractError):
        augment.window_warp(x, 4, 20, 2.0)
    with pytest.raises(ContractError):
        augment.window_warp(x, 4, 8, 0.0)


# ---------------------------------------------------------------------------
# flip / time noise


def test_flip_values():
    out = augment.flip(sig([1.0, -2.0, 3.0]))
    np.testing.assert_array_equal(out.samples, [-1.0, 2.0, -3.0])


def test_flip_involution():
    x = np.random.default_rng(1).standard_normal(32)
    np.testing.assert_array_equal(augment.flip(augment.flip(sig(x))).samples, x)


def test_flip_zero_signal():
    np.testing.assert_array_equal(augment.flip(sig(np.zeros(8))).samples, np.zeros(8))


def test_time_noise_zero_sigma_identity():
    x = np.random.default_rng(2).standard_normal(32)
    np.testing.assert_array_equal(augment.time_noise(sig(x), 0.0, 3).samples, x)


def test_time_noise_deterministic():
    x = sig(np.zeros(64))
    a = augment.time_noise(x, 1.0, 42).samples
    b = augment.time_noise(x, 1.0, 42).samples
    np.testing.assert_array_equal(a, b)


def test_time_noise_statistics():
    t = 100_000
    n = augment.time_noise(sig(np.zeros(t)), 1.0, 7).samples
    assert abs(n.mean()) <= 0.02
    assert 0.97 <= n.var() <= 1.03


# ---------------------------------------------------------------------------
# frequency ops


def test_freq_mask_zero_fraction_identity():
    x = np.random.default_rng(3).standard_normal(128)
    out = augment.freq_mask(sig(x), 0.0, 1)
    assert np.max(np.abs(out.samples - x)) <= 1e-9


def test_freq_mask_full_fraction_zeroes():
    x = np.random.default_rng(4).standard_normal(128)
    out = augment.freq_mask(sig(x), 1.0, 1)
    assert np.max(np.abs(out.samples)) <= 1e-9


def test_freq_mask_annihilates_pure_tone():
    t = 256
    k = 17
    x = np.cos(2 * np.pi * k * np.arange(t) / t)
    out = augment.mask_band(sig(x), k, 1)
    assert np.max(np.abs(out.samples)) <= 1e-9


def test_freq_mask_output_real_and_same_length():
    # non-power-of-two length exercises the padded path
    x = np.random.default_rng(5).standard_normal(100)
    out = augment.freq_mask(sig(x), 0.1, 9)
    assert len(out) == 100
    assert out.samples.dtype == np.float64


def test_freq_mask_removes_band_energy():
    rng = np.random.default_rng(6)
    t = 256
    x = rng.standard_normal(t)
    out = augment.mask_band(sig(x), 10, 20)
    bins = fft_array(out.samples)
    assert np.max(np.abs(bins[10:30])) <= 1e-9


def test_freq_noise_zero_sigma_identity():
    x = np.random.default_rng(7).standard_normal(64)
    np.testing.assert_array_equal(augment.freq_noise(sig(x), 0.0, 1).samples, x)


def test_freq_noise_deterministic():
    x = sig(np.random.default_rng(8).standard_normal(64))
    a = augment.freq_noise(x, 0.5, 11).samples
    b = augment.freq_noise(x, 0.5, 11).samples
    np.testing.assert_array_equal(a, b)


def test_freq_noise_parseval_energy_increase():
    t = 2048
    sigma = 0.5
    x = sig(np.zeros(t))
    added = augment.freq_noise(x, sigma, 13).samples
    energy = np.sum(added**2)
    expected = sigma**2 * t
    spread = 5.0 * np.sqrt(2.0 / t)  # 5-sigma chi-square concentration
    assert expected * (1 - spread) <= energy <= expected * (1 + spread)


# ---------------------------------------------------------------------------
# view sampling


def _tone(t=256):
    return sig(np.cos(2 * np.pi * 7 * np.arange(t) / t), 6000.0)


def test_sample_views_count_and_tagging():
    policy = augment.AugPolicy(seed=3)
    views = augment.sample_views(_tone(), policy, 5, source_index=12)
    assert len(views) == 5
    for v in views:
        assert len(v.signal) == 256
        assert v.source_index == 12
        assert v.applied_ops


def test_sample_views_single_op_flip():
    x = _tone()
    policy = augment.AugPolicy(ops=("flip",), seed=0)
    for v in augment.sample_views(x, policy, 4):
        np.testing.assert_array_equal(v.signal.samples, -x.samples)


def test_sample_views_deterministic():
    x = _tone()
    policy = augment.AugPolicy(seed=99)
    a = augment.sample_views(x, policy, 5, source_index=2)
    b = augment.sample_views(x, policy, 5, source_index=2)
    for va, vb in zip(a, b):
        np.testing.assert_array_equal(va.signal.samples, vb.signal.samples)
        assert va.applied_ops == vb.applied_ops


def test_sample_views_crop():
    policy = augment.AugPolicy(ops=("flip",), crop_length=64, seed=1)
    views = augment.sample_views(_tone(), policy, 3)
    assert all(len(v.signal) == 64 for v in views)


def test_sample_views_empty_policy_rejected():
    with pytest.raises(ContractError):
        augment.sample_views(_tone(), augment.AugPolicy(ops=(), seed=0), 2)


def test_policy_validation():
    with pytest.raises(ContractError):
        augment.AugPolicy(ops=("sparkle",))
    with pytest.raises(ContractError):
        augment.AugPolicy(warp_scale_range=(0.0, 2.0))
    with pytest.raises(ContractError):
        augment.AugPolicy(mask_fraction_range=(0.5, 1.5))
    with pytest.raises(ContractError):
        augment.AugPolicy(noise_scale=-0.1)
