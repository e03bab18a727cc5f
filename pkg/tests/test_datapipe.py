import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfmeta import datapipe as D
from tfmeta.errors import CapacityError, ContractError
from tfmeta.spectral import fft_array


def record(samples, rate=6000.0, label=0):
    return D.SignalRecord(np.asarray(samples, dtype=float), rate, label)


# ---------------------------------------------------------------------------
# overlapping windows


def test_overlap_exact_fit_single_window():
    ds = D.overlap_sample(record(np.arange(2048.0)), 2048, 850)
    assert len(ds) == 1


def test_overlap_two_windows():
    ds = D.overlap_sample(record(np.zeros(2898)), 2048, 850)
    assert len(ds) == 2


def test_overlap_rig_scale_count():
    ds = D.overlap_sample(record(np.zeros(183_098)), 2048, 850)
    assert len(ds) == 214


def test_overlap_window_contents_and_labels():
    rec = record(np.arange(20.0), label=2)
    ds = D.overlap_sample(rec, 8, 4)
    assert len(ds) == 4
    np.testing.assert_array_equal(ds.windows[1], np.arange(4.0, 12.0))
    assert np.all(ds.labels == 2)


def test_overlap_short_record_rejected():
    with pytest.raises(CapacityError):
        D.overlap_sample(record(np.zeros(100)), 128, 10)


@settings(max_examples=200, deadline=None)
@given(
    t=st.integers(min_value=1, max_value=5000),
    w=st.integers(min_value=1, max_value=500),
    s=st.integers(min_value=1, max_value=700),
)
def test_overlap_count_matches_enumeration_oracle(t, w, s):
    if t < w:
        return
    count = len(D.overlap_sample(record(np.zeros(t)), w, s))
    # independent oracle: enumerate every valid offset
    expected = sum(1 for off in range(0, t, s) if off + w <= t)
    assert count == expected == (t - w) // s + 1


# ---------------------------------------------------------------------------
# split


def _balanced_ds(per_class=214, n_classes=3, width=16):
    rng = np.random.default_rng(0)
    windows = rng.standard_normal((per_class * n_classes, width))
    labels = np.repeat(np.arange(n_classes), per_class)
    return D.WindowDataset(windows, labels, 6000.0)


def test_split_rig_scale_counts():
    train, test = D.split(_balanced_ds(), 0.7, seed=0)
    assert train.per_class_counts() == {0: 150, 1: 150, 2: 150}
    assert test.per_class_counts() == {0: 64, 1: 64, 2: 64}
    assert train.split == "train" and test.split == "test"


def test_split_is_partition():
    ds = _balanced_ds(per_class=21, width=4)
    train, test = D.split(ds, 0.7, seed=3)
    all_rows = {tuple(r) for r in ds.windows}
    train_rows = {tuple(r) for r in train.windows}
    test_rows = {tuple(r) for r in test.windows}
    assert train_rows | test_rows == all_rows
    assert not train_rows & test_rows
    for c in ds.classes():
        target = 0.7 * ds.per_class_counts()[c]
        assert abs(train.per_class_counts()[c] - target) <= 1.0


def test_split_deterministic():
    ds = _balanced_ds(per_class=10, width=4)
    a_train, a_test = D.split(ds, 0.7, seed=5)
    b_train, b_test = D.split(ds, 0.7, seed=5)
    np.testing.assert_array_equal(a_train.windows, b_train.windows)
    np.testing.assert_array_equal(a_test.windows, b_test.windows)


def test_split_ratio_validated():
    ds = _balanced_ds(per_class=4, width=2)
    for ratio in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ContractError):
            D.split(ds, ratio, seed=0)


# ---------------------------------------------------------------------------
# normalization


def test_normalize_train_stats():
    ds = _balanced_ds(per_class=20, width=8)
    train, test = D.split(ds, 0.7, seed=1)
    train_n, test_n, stats = D.normalize(train, test)
    assert abs(train_n.windows.mean()) <= 1e-9
    assert abs(train_n.windows.std() - 1.0) <= 1e-9
    assert not stats.std_flagged
    np.testing.assert_allclose(
        stats.invert(train_n.windows), train.windows, atol=1e-9
    )
    np.testing.assert_allclose(test_n.windows, stats.apply(test.windows))


def test_normalize_constant_dataset_flagged():
    ds = D.WindowDataset(np.full((4, 8), 3.0), np.zeros(4, int), 1.0)
    out, _, stats = D.normalize(ds)
    assert stats.std_flagged and stats.std == 1.0
    np.testing.assert_array_equal(out.windows, np.zeros((4, 8)))


# ---------------------------------------------------------------------------
# synthetic generator


def test_synth_single_harmonic_peaks_at_class_bin():
    spec = D.SynthSpec(
        classes=[D.ClassSpec(37.0, (1.0,), 0.0, 0.0)],
        noise_sigma=0.0,
        record_length=2048,
        sample_rate=6000.0,
    )
    (rec,) = D.synth_generate(spec, seed=0)
    mags = np.abs(fft_array(rec.samples))
    half = len(mags) // 2
    peak = int(np.argmax(mags[1:half])) + 1
    assert peak == int(round(37.0 * 2048 / 6000.0))


def test_synth_two_classes_differ_at_their_bins():
    spec = D.SynthSpec(
        classes=[
            D.ClassSpec(37.0, (1.0,), 0.0, 0.0),
            D.ClassSpec(89.0, (1.0,), 0.0, 0.0),
        ],
        noise_sigma=0.0,
        record_length=6000,
        sample_rate=6000.0,
    )
    a, b = D.synth_generate(spec, seed=0)
    mag_a = np.abs(fft_array(a.samples))
    mag_b = np.abs(fft_array(b.samples))
    half = 3000
    diff = np.abs(mag_a - mag_b)[:half]
    top_two = set(np.argsort(diff)[-2:])
    assert top_two == {37, 89}  # record length == fs puts 1 Hz per bin


def test_synth_deterministic():
    spec = D.SynthSpec(record_length=4096)
    a = D.synth_generate(spec, records_per_class=2, seed=9)
    b = D.synth_generate(spec, records_per_class=2, seed=9)
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.samples, rb.samples)
        assert ra.label == rb.label


def test_synth_nyquist_violation_rejected():
    with pytest.raises(ContractError):
        D.SynthSpec(
            classes=[D.ClassSpec(2500.0, (1.0, 1.0), 0.0, 0.0)], sample_rate=6000.0
        )


def test_synth_labels_cover_classes():
    spec = D.SynthSpec(record_length=2048)
    recs = D.synth_generate(spec, records_per_class=2, seed=0)
    assert [r.label for r in recs] == [0, 0, 1, 1, 2, 2]


# ---------------------------------------------------------------------------
# corruption


def test_corrupt_identity_when_disabled():
    ds = _balanced_ds(per_class=4, width=64)
    out = D.corrupt(ds, noise_fraction=0.0, variance=10.0, mask_fraction=0.0, seed=0)
    np.testing.assert_array_equal(out.windows, ds.windows)


def test_corrupt_alters_exactly_half():
    ds = _balanced_ds(per_class=4, width=256)
    out = D.corrupt(ds, noise_fraction=0.5, variance=10.0, mask_fraction=0.0, seed=1)
    changed = np.sum(np.any(out.windows != ds.windows, axis=1))
    assert changed == len(ds) // 2


def test_corrupt_noise_variance_concentration():
    ds = D.WindowDataset(np.zeros((6, 2048)), np.zeros(6, int), 6000.0)
    out = D.corrupt(ds, noise_fraction=0.5, variance=10.0, mask_fraction=0.0, seed=2)
    added = out.windows - ds.windows
    noisy = np.any(added != 0, axis=1)
    assert noisy.sum() == 3
    for row in added[noisy]:
        assert 9.5 <= row.var() <= 10.5


def test_corrupt_masks_a_band_in_every_window():
    rng = np.random.default_rng(3)
    ds = D.WindowDataset(rng.standard_normal((4, 256)), np.zeros(4, int), 6000.0)
    out = D.corrupt(ds, noise_fraction=0.0, variance=0.0, mask_fraction=0.05, seed=4)
    for row in out.windows:
        mags = np.abs(fft_array(row))
        width = int(np.ceil(0.05 * 256))
        # some contiguous band of that width is (numerically) dead
        dead = mags < 1e-9
        runs = np.flatnonzero(dead)
        assert runs.size >= width


def test_corrupt_validates_fractions():
    ds = _balanced_ds(per_class=2, width=8)
    with pytest.raises(ContractError):
        D.corrupt(ds, noise_fraction=1.5, variance=1.0, mask_fraction=0.0, seed=0)


# ---------------------------------------------------------------------------
# label budget


def test_label_budget_counts_and_minimum():
    ds = _balanced_ds(per_class=150, width=4)
    tiny = D.label_budget(ds, 0.01, seed=0)
    assert tiny.per_class_counts() == {0: 2, 1: 2, 2: 2}  # round(1.5) -> 2
    one = D.label_budget(_balanced_ds(per_class=3, width=4), 0.01, seed=0)
    assert one.per_class_counts() == {0: 1, 1: 1, 2: 1}  # minimum enforced


def test_label_budget_deterministic_and_validated():
    ds = _balanced_ds(per_class=10, width=4)
    a = D.label_budget(ds, 0.3, seed=4)
    b = D.label_budget(ds, 0.3, seed=4)
    np.testing.assert_array_equal(a.windows, b.windows)
    with pytest.raises(ContractError):
        D.label_budget(ds, 0.0, seed=0)


# ---------------------------------------------------------------------------
# manifest I/O


def test_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    recs = [
        D.SignalRecord(rng.standard_normal(500), 6000.0, label=0, source="a"),
        D.SignalRecord(rng.standard_normal(300), 6000.0, label=None, source="b"),
    ]
    manifest = D.save_records(recs, str(tmp_path / "data"))
    loaded = D.load_manifest(manifest)
    assert len(loaded) == 2
    assert loaded[0].label == 0 and loaded[1].label is None
    # float32 on disk: expect single precision agreement
    np.testing.assert_allclose(loaded[0].samples, recs[0].samples, atol=1e-6)
    assert loaded[0].sample_rate == 6000.0


def test_manifest_csv_records(tmp_path):
    path = tmp_path / "rec.csv"
    values = np.array([0.5, -1.25, 3.0])
    np.savetxt(path, values)
    manifest = tmp_path / "manifest.yaml"
    manifest.write_text(
        "records:\n- path: rec.csv\n  label: 1\n  sample_rate: 100.0\n"
    )
    (rec,) = D.load_manifest(str(manifest))
    np.testing.assert_allclose(rec.samples, values)
    assert rec.label == 1 and rec.sample_rate == 100.0


def test_load_manifest_rejects_games(tmp_path):
    bad = tmp_path / "nope.yaml"
    bad.write_text("just: nonsense\n")
    with pytest.raises(ContractError):
        D.load_manifest(str(bad))
