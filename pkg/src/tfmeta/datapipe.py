"""Signal ingestion and dataset construction for training runs.

Long records become fixed-length windows through overlapping sampling; the
windows are split stratified per class, normalized with train-set statistics,
and optionally corrupted for robustness evaluation. A synthetic rotor-fault
generator stands in for a physical test rig: each fault class carries a
distinct characteristic frequency with a few harmonics, an optional periodic
impulse train, and a white noise floor.

On-disk interchange is a YAML manifest listing record files; each record file
is raw little-endian float32 (or a one-sample-per-line CSV) and is promoted
to float64 when loaded.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import augment
from .errors import CapacityError, ContractError
from .spectral import Signal

UNLABELED = -1


@dataclass
class SignalRecord:
    """One long recording: samples, rate, optional class label, provenance."""

    samples: np.ndarray
    sample_rate: float
    label: int | None = None
    source: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ContractError("record samples must be a non-empty 1-D sequence")
        if self.sample_rate <= 0:
            raise ContractError("sample rate must be positive")
        if self.label is not None and self.label < 0:
            raise ContractError("labels must be >= 0 (or None for unlabeled)")


@dataclass
class WindowDataset:
    """Equal-length windows with integer labels (-1 marks unlabeled)."""

    windows: np.ndarray  # (N, W) float64
    labels: np.ndarray  # (N,) int64
    sample_rate: float
    split: str = ""

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 2 or self.labels.shape != (self.windows.shape[0],):
            raise ContractError("windows must be (N, W) with one label per window")

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def window_length(self) -> int:
        return self.windows.shape[1]

    def classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels) if c != UNLABELED)

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def per_class_counts(self) -> dict[int, int]:
        return {c: int(self.class_indices(c).size) for c in self.classes()}


@dataclass
class NormStats:
    """Dataset-global normalization statistics, computed on the train split."""

    mean: float
    std: float
    std_flagged: bool = False  # true when a zero std was replaced by 1

    def apply(self, windows: np.ndarray) -> np.ndarray:
        return (windows - self.mean) / self.std

    def invert(self, windows: np.ndarray) -> np.ndarray:
        return windows * self.std + self.mean


@dataclass
class ClassSpec:
    """Spectral signature of one fault class."""

    frequency_hz: float
    harmonic_amplitudes: tuple[float, ...] = (1.0, 0.5, 0.25)
    impulse_rate_hz: float = 0.0
    impulse_amplitude: float = 0.0


@dataclass
class SynthSpec:
    """Synthetic rotor dataset: one ClassSpec per fault state."""

    classes: list[ClassSpec] = field(
        default_factory=lambda: [
            ClassSpec(37.0, (1.0, 0.5, 0.25), 0.0, 0.0),
            ClassSpec(61.0, (1.0, 0.6, 0.3), 13.0, 2.0),
            ClassSpec(89.0, (0.9, 0.7, 0.2), 23.0, 2.0),
        ]
    )
    noise_sigma: float = 0.5
    record_length: int = 183_098
    sample_rate: float = 6000.0

    def __post_init__(self):
        if not self.classes:
            raise ContractError("synthetic spec needs at least one class")
        freqs = [c.frequency_hz for c in self.classes]
        if len(set(freqs)) != len(freqs):
            raise ContractError("class frequencies must be distinct")
        nyquist = self.sample_rate / 2.0
        for i, c in enumerate(self.classes):
            top = c.frequency_hz * len(c.harmonic_amplitudes)
            if top >= nyquist:
                raise ContractError(
                    f"class {i}: harmonic {top} Hz exceeds Nyquist {nyquist} Hz"
                )
        if self.noise_sigma < 0 or self.record_length < 1:
            raise ContractError("invalid noise level or record length")


# ---------------------------------------------------------------------------
# window construction


def overlap_sample(rec: SignalRecord, window: int, step: int) -> WindowDataset:
    """Carve overlapping windows at offsets 0, step, 2*step, ...

    Yields floor((T - W)/S) + 1 windows, each inheriting the record label.
    """
    if step < 1:
        raise ContractError("step must be >= 1")
    t = rec.samples.size
    if t < window:
        raise CapacityError(f"record of {t} samples is shorter than window {window}")
    count = (t - window) // step + 1
    offsets = np.arange(count) * step
    windows = rec.samples[offsets[:, None] + np.arange(window)[None, :]]
    label = UNLABELED if rec.label is None else rec.label
    return WindowDataset(windows, np.full(count, label), rec.sample_rate)


def build_windows(records: list[SignalRecord], window: int, step: int) -> WindowDataset:
    """Window every record and stack the results."""
    if not records:
        raise CapacityError("no records to window")
    parts = [overlap_sample(r, window, step) for r in records]
    rate = parts[0].sample_rate
    return WindowDataset(
        np.concatenate([p.windows for p in parts]),
        np.concatenate([p.labels for p in parts]),
        rate,
    )


def split(ds: WindowDataset, ratio: float, seed) -> tuple[WindowDataset, WindowDataset]:
    """Stratified split; per class, round(ratio * n) windows go to train."""
    if not 0.0 < ratio < 1.0:
        raise ContractError(f"split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    strata = sorted(int(c) for c in np.unique(ds.labels))
    for c in strata:
        idx = np.flatnonzero(ds.labels == c)
        if idx.size == 0:
            raise CapacityError(f"class {c} is empty")
        perm = rng.permutation(idx)
        n_train = int(np.floor(ratio * idx.size + 0.5))
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    mk = lambda sel, tag: WindowDataset(
        ds.windows[sel].copy(), ds.labels[sel].copy(), ds.sample_rate, tag
    )
    return mk(train_idx, "train"), mk(test_idx, "test")


def normalize(
    train: WindowDataset, test: WindowDataset | None = None
) -> tuple[WindowDataset, WindowDataset | None, NormStats]:
    """Subtract the train-set mean and divide by the train-set std.

    A zero std is replaced by 1 and flagged. The same statistics are applied
    to the test split so evaluation sees the training scale.
    """
    if len(train) == 0:
        raise ContractError("cannot normalize an empty dataset")
    mean = float(train.windows.mean())
    std = float(train.windows.std())
    flagged = std < 1e-12
    stats = NormStats(mean, 1.0 if flagged else std, flagged)
    train_n = replace(train, windows=stats.apply(train.windows))
    test_n = None if test is None else replace(test, windows=stats.apply(test.windows))
    return train_n, test_n, stats


def label_budget(ds: WindowDataset, fraction: float, seed) -> WindowDataset:
    """Stratified labeled subset; at least one window per class is kept."""
    if not 0.0 < fraction <= 1.0:
        raise ContractError(f"label budget must lie in (0, 1], got {fraction}")
    classes = ds.classes()
    if not classes:
        raise CapacityError("dataset has no labeled classes")
    rng = np.random.default_rng(seed)
    keep = []
    for c in classes:
        idx = ds.class_indices(c)
        n_keep = max(1, int(np.floor(fraction * idx.size + 0.5)))
        keep.append(rng.choice(idx, size=n_keep, replace=False))
    keep = np.sort(np.concatenate(keep))
    return WindowDataset(
        ds.windows[keep].copy(), ds.labels[keep].copy(), ds.sample_rate, ds.split
    )


# ---------------------------------------------------------------------------
# synthetic generator


def synth_generate(
    spec: SynthSpec, records_per_class: int = 1, seed: int = 0
) -> list[SignalRecord]:
    """Deterministic synthetic records: harmonics + impulse train + noise."""
    if records_per_class < 1:
        raise ContractError("records_per_class must be >= 1")
    records = []
    t = np.arange(spec.record_length) / spec.sample_rate
    for label, cls in enumerate(spec.classes):
        for r in range(records_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, label, r]))
            x = np.zeros(spec.record_length)
            for h, amp in enumerate(cls.harmonic_amplitudes, start=1):
                phase = rng.uniform(0.0, 2.0 * np.pi)
                x += amp * np.cos(2.0 * np.pi * h * cls.frequency_hz * t + phase)
            if cls.impulse_rate_hz > 0 and cls.impulse_amplitude != 0:
                period = max(1, int(round(spec.sample_rate / cls.impulse_rate_hz)))
                offset = int(rng.integers(0, period))
                x[offset::period] += cls.impulse_amplitude
            if spec.noise_sigma > 0:
                x += rng.normal(0.0, spec.noise_sigma, size=spec.record_length)
            records.append(
                SignalRecord(
                    x,
                    spec.sample_rate,
                    label=label,
                    source=f"synthetic/class{label}/rec{r}",
                )
            )
    return records


# ---------------------------------------------------------------------------
# corruption protocol


def corrupt(
    ds: WindowDataset,
    noise_fraction: float = 0.5,
    variance: float = 10.0,
    mask_fraction: float = 0.05,
    seed: int = 0,
) -> WindowDataset:
    """Noise-corrupt a window subset and band-mask every window.

    floor(noise_fraction * N) windows (seeded choice) receive zero-mean
    Gaussian noise of the given variance; every window then has a contiguous
    spectral band of ``mask_fraction`` zeroed at a seeded position.
    """
    if not 0.0 <= noise_fraction <= 1.0 or not 0.0 <= mask_fraction <= 1.0:
        raise ContractError("fractions must lie in [0, 1]")
    if variance < 0:
        raise ContractError("variance must be >= 0")
    windows = ds.windows.copy()
    n = len(ds)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    n_noisy = int(np.floor(noise_fraction * n))
    if n_noisy and variance > 0:
        noisy = rng.choice(n, size=n_noisy, replace=False)
        windows[noisy] += rng.normal(
            0.0, np.sqrt(variance), size=(n_noisy, ds.window_length)
        )
    if mask_fraction > 0:
        for i in range(n):
            sig = augment.freq_mask(
                Signal(windows[i], ds.sample_rate),
                mask_fraction,
                np.random.SeedSequence([seed, 1, i]),
            )
            windows[i] = sig.samples
    return WindowDataset(windows, ds.labels.copy(), ds.sample_rate, ds.split)


# ---------------------------------------------------------------------------
# manifest I/O


def save_records(records: list[SignalRecord], out_dir: str) -> str:
    """Write raw float32 record files plus a YAML manifest; returns its path."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, rec in enumerate(records):
        name = f"record_{i:03d}.f32"
        rec.samples.astype("<f4").tofile(os.path.join(out_dir, name))
        entries.append(
            {
                "path": name,
                "label": None if rec.label is None else int(rec.label),
                "sample_rate": float(rec.sample_rate),
            }
        )
    manifest_path = os.path.join(out_dir, "manifest.yaml")
    with open(manifest_path, "w") as fh:
        yaml.safe_dump({"records": entries}, fh, sort_keys=False)
    return manifest_path


def load_manifest(manifest_path: str) -> list[SignalRecord]:
    """Read records listed in a manifest (.f32 raw floats or .csv lines)."""
    with open(manifest_path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "records" not in doc:
        raise ContractError(f"{manifest_path} is not a record manifest")
    base = os.path.dirname(os.path.abspath(manifest_path))
    records = []
    for entry in doc["records"]:
        path = entry["path"]
        full = path if os.path.isabs(path) else os.path.join(base, path)
        if full.endswith(".csv"):
            samples = np.loadtxt(full, dtype=np.float64, ndmin=1)
        else:
            samples = np.fromfile(full, dtype="<f4").astype(np.float64)
        records.append(
            SignalRecord(
                samples,
                float(entry["sample_rate"]),
                label=entry.get("label"),
                source=path,
            )
        )
    return records
