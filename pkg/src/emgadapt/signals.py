"""Sliding-window feature extraction for labeled multichannel recordings.

A recording is a T x C signal with one class label and one repetition index
per sample (label 0 is rest).  The pipeline cuts the signal into
overlapping fixed-length windows, summarizes every window per channel with
three amplitude features -- mean absolute value, variance and waveform
length -- and z-normalizes feature columns with statistics fitted on
training data only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

CONDITIONS = ("intact", "amputee")


# ---------------------------------------------------------------------------
# core types


@dataclass
class Recording:
    """Raw multichannel signal with per-sample labels and repetition ids."""

    subject_id: str
    condition: str
    sampling_rate_hz: float
    channels: int
    num_classes: int
    samples: np.ndarray      # T x C
    labels: np.ndarray       # T, ints in [0, num_classes)
    repetitions: np.ndarray  # T, positive ints

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if not self.sampling_rate_hz > 0:
            raise ValueError("sampling_rate_hz must be > 0")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        self.samples = np.asarray(self.samples, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.repetitions = np.asarray(self.repetitions, dtype=int)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.channels:
            raise ValueError("samples must be a T x channels array")
        t = self.samples.shape[0]
        if t < 1:
            raise ValueError("recording must contain at least one sample")
        if not np.isfinite(self.samples).all():
            raise ValueError("samples contain non-finite values")
        if self.labels.shape != (t,) or self.repetitions.shape != (t,):
            raise ValueError("labels and repetitions must have one entry per sample")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("labels out of range for num_classes")
        if self.repetitions.min() < 1:
            raise ValueError("repetition indices must be positive")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window geometry in milliseconds."""

    window_ms: float = 200.0
    step_ms: float = 10.0

    def __post_init__(self):
        if not self.window_ms > 0 or not self.step_ms > 0:
            raise ValueError("window_ms and step_ms must be > 0")
        if self.step_ms > self.window_ms:
            raise ValueError("step_ms must not exceed window_ms")

    def window_samples(self, rate_hz: float) -> int:
        return _ms_to_samples(self.window_ms, rate_hz)

    def step_samples(self, rate_hz: float) -> int:
        return _ms_to_samples(self.step_ms, rate_hz)


def _ms_to_samples(ms: float, rate_hz: float) -> int:
    # half-up rounding keeps window geometry stable across platforms
    n = int(math.floor(ms * rate_hz / 1000.0 + 0.5))
    if n < 1:
        raise ValueError(f"{ms} ms is shorter than one sample at {rate_hz} Hz")
    return n


class Window(NamedTuple):
    values: np.ndarray  # W x C slice of the recording
    label: int
    repetition: int


@dataclass
class NormStats:
    """Per-dimension z-normalization statistics (population convention)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-d arrays of equal length")

    def scale(self) -> np.ndarray:
        # dimensions with (numerically) zero spread are mapped to constant 0
        degenerate = self.std <= 1e-12 * (np.abs(self.mean) + 1.0)
        inv = np.where(degenerate, 0.0, 1.0 / np.where(degenerate, 1.0, self.std))
        return inv

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError("feature dimension does not match normalization stats")
        return (X - self.mean) * self.scale()

    def to_doc(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_doc(cls, doc: dict) -> "NormStats":
        return cls(mean=np.array(doc["mean"], dtype=float), std=np.array(doc["std"], dtype=float))


@dataclass
class Dataset:
    """Feature matrix with labels, class count and optional normalization."""

    features: np.ndarray  # N x d
    labels: np.ndarray    # N
    num_classes: int
    feature_names: list[str]
    norm_stats: NormStats | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2:
            raise ValueError("features must be an N x d array")
        n, d = self.features.shape
        if self.labels.shape != (n,):
            raise ValueError("labels must have one entry per feature row")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels out of range for num_classes")
        if len(self.feature_names) != d:
            raise ValueError("feature_names must match feature dimension")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            feature_names=list(self.feature_names),
            norm_stats=self.norm_stats,
        )


# ---------------------------------------------------------------------------
# segmentation and features


def segment(rec: Recording, spec: WindowSpec) -> list[Window]:
    """Cut a recording into overlapping windows with majority labels.

    Window offsets are 0, S, 2S, ... while the window still fits; windows
    that span more than one non-rest class (movement transitions) are
    dropped.  Majority ties resolve to the smaller class id, so rest wins
    an exact tie at a rest/movement boundary.
    """
    w = spec.window_samples(rec.sampling_rate_hz)
    s = spec.step_samples(rec.sampling_rate_hz)
    t = rec.num_samples
    if t < w:
        raise ValueError(f"recording too short: {t} samples < window of {w}")
    out: list[Window] = []
    for start in range(0, t - w + 1, s):
        lab = rec.labels[start : start + w]
        counts = np.bincount(lab, minlength=rec.num_classes)
        if np.count_nonzero(counts[1:]) > 1:
            continue  # spans two different movements
        rep_counts = np.bincount(rec.repetitions[start : start + w])
        out.append(
            Window(
                values=rec.samples[start : start + w],
                label=int(np.argmax(counts)),
                repetition=int(np.argmax(rep_counts)),
            )
        )
    return out


def window_count(num_samples: int, window: int, step: int) -> int:
    """Number of window offsets: floor((T - W) / S) + 1 (requires T >= W)."""
    if num_samples < window:
        return 0
    return (num_samples - window) // step + 1


def extract_features(window: np.ndarray) -> np.ndarray:
    """Per-channel MAV, variance and waveform length of one window.

    For a channel x of length W:
      mav = mean(|x|)
      var = sum((x - mean(x))^2) / (W - 1)
      wl  = sum(|x[t+1] - x[t]|)
    Output ordering is [mav_1..mav_C, var_1..var_C, wl_1..wl_C].
    """
    window = np.asarray(window, dtype=float)
    if window.ndim != 2:
        raise ValueError("window must be a W x C array")
    if window.shape[0] < 2:
        raise ValueError("window must contain at least 2 samples")
    mav = np.mean(np.abs(window), axis=0)
    var = np.var(window, axis=0, ddof=1)
    wl = np.sum(np.abs(np.diff(window, axis=0)), axis=0)
    return np.concatenate([mav, var, wl])


def feature_names(channels: int) -> list[str]:
    names = []
    for block in ("mav", "var", "wl"):
        names.extend(f"{block}_ch{c + 1}" for c in range(channels))
    return names


def build_dataset(recs: list[Recording], spec: WindowSpec) -> Dataset:
    """Segment recordings and stack per-window feature vectors (unnormalized)."""
    if not recs:
        raise ValueError("no data: empty recording list")
    channels = recs[0].channels
    num_classes = recs[0].num_classes
    for r in recs:
        if r.channels != channels or r.num_classes != num_classes:
            raise ValueError("recordings disagree on channel or class count")
    rows, labels = [], []
    for r in recs:
        for win in segment(r, spec):
            rows.append(extract_features(win.values))
            labels.append(win.label)
    if not rows:
        raise ValueError("no data: segmentation produced no windows")
    return Dataset(
        features=np.array(rows),
        labels=np.array(labels, dtype=int),
        num_classes=num_classes,
        feature_names=feature_names(channels),
    )


def fit_normalizer(train: Dataset) -> NormStats:
    if len(train) == 0:
        raise ValueError("cannot fit normalizer on an empty dataset")
    return NormStats(mean=train.features.mean(axis=0), std=train.features.std(axis=0))


def apply_normalizer(ds: Dataset, stats: NormStats) -> Dataset:
    return replace(ds, features=stats.apply(ds.features), norm_stats=stats)


def average_feature_blocks(ds: Dataset) -> Dataset:
    """Collapse the three per-channel feature blocks into their mean (d -> d/3)."""
    d = ds.dim
    if d % 3 != 0:
        raise ValueError("feature dimension is not divisible into three blocks")
    c = d // 3
    avg = (ds.features[:, :c] + ds.features[:, c : 2 * c] + ds.features[:, 2 * c :]) / 3.0
    return Dataset(
        features=avg,
        labels=ds.labels,
        num_classes=ds.num_classes,
        feature_names=[f"avg_ch{i + 1}" for i in range(c)],
    )


def build_subject_datasets(
    rec: Recording,
    spec: WindowSpec,
    test_reps: tuple[int, ...] = (5, 6),
    feature_mode: str = "concat",
) -> tuple[Dataset, Dataset]:
    """Split one subject's windows into train/test by repetition holdout.

    Windows whose repetition id is in `test_reps` form the test set.  The
    normalizer is fitted on the training windows only and applied to both
    sides.  feature_mode "averaged" additionally collapses the three
    feature blocks to their per-channel mean and re-normalizes.
    """
    if feature_mode not in ("concat", "averaged"):
        raise ValueError(f"unknown feature_mode: {feature_mode!r}")
    test_reps = tuple(int(r) for r in test_reps)
    windows = segment(rec, spec)
    train_w = [w for w in windows if w.repetition not in test_reps]
    test_w = [w for w in windows if w.repetition in test_reps]
    if not train_w or not test_w:
        raise ValueError("no data: repetition holdout left an empty split")

    def _to_dataset(ws: list[Window]) -> Dataset:
        return Dataset(
            features=np.array([extract_features(w.values) for w in ws]),
            labels=np.array([w.label for w in ws], dtype=int),
            num_classes=rec.num_classes,
            feature_names=feature_names(rec.channels),
        )

    train, test = _to_dataset(train_w), _to_dataset(test_w)
    stats = fit_normalizer(train)
    train, test = apply_normalizer(train, stats), apply_normalizer(test, stats)
    if feature_mode == "averaged":
        train, test = average_feature_blocks(train), average_feature_blocks(test)
        stats2 = fit_normalizer(train)
        train, test = apply_normalizer(train, stats2), apply_normalizer(test, stats2)
    return train, test


# ---------------------------------------------------------------------------
# file formats


def _format_float(v: float) -> str:
    return repr(float(v))


def save_recording(rec: Recording, stem: str | Path) -> None:
    """Write <stem>.json (metadata) and <stem>.csv (samples)."""
    stem = Path(stem)
    meta = {
        "subject_id": rec.subject_id,
        "condition": rec.condition,
        "sampling_rate_hz": rec.sampling_rate_hz,
        "channels": rec.channels,
        "num_classes": rec.num_classes,
    }
    stem.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"ch_{c + 1}" for c in range(rec.channels)] + ["label", "repetition"])
        for i in range(rec.num_samples):
            writer.writerow(
                [_format_float(v) for v in rec.samples[i]]
                + [int(rec.labels[i]), int(rec.repetitions[i])]
            )


def load_recording(stem: str | Path) -> Recording:
    stem = Path(stem)
    if stem.suffix:
        stem = stem.with_suffix("")
    meta = json.loads(stem.with_suffix(".json").read_text())
    with open(stem.with_suffix(".csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        c = meta["channels"]
        if header != [f"ch_{i + 1}" for i in range(c)] + ["label", "repetition"]:
            raise ValueError(f"unexpected recording CSV header in {stem}.csv")
        samples, labels, reps = [], [], []
        for row in reader:
            samples.append([float(v) for v in row[:c]])
            labels.append(int(row[c]))
            reps.append(int(row[c + 1]))
    return Recording(
        subject_id=meta["subject_id"],
        condition=meta["condition"],
        sampling_rate_hz=float(meta["sampling_rate_hz"]),
        channels=int(meta["channels"]),
        num_classes=int(meta["num_classes"]),
        samples=np.array(samples),
        labels=np.array(labels, dtype=int),
        repetitions=np.array(reps, dtype=int),
    )


def save_dataset(ds: Dataset, stem: str | Path) -> None:
    """Write <stem>.csv (features + label) and <stem>.json (sidecar)."""
    stem = Path(stem)
    sidecar = {
        "feature_names": list(ds.feature_names),
        "num_classes": ds.num_classes,
        "norm_stats": ds.norm_stats.to_doc() if ds.norm_stats is not None else None,
    }
    stem.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f_{i + 1}" for i in range(ds.dim)] + ["label"])
        for i in range(len(ds)):
            writer.writerow([_format_float(v) for v in ds.features[i]] + [int(ds.labels[i])])


def load_dataset(stem: str | Path) -> Dataset:
    stem = Path(stem)
    if stem.suffix:
        stem = stem.with_suffix("")
    sidecar = json.loads(stem.with_suffix(".json").read_text())
    with open(stem.with_suffix(".csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(sidecar["feature_names"])
        if header != [f"f_{i + 1}" for i in range(d)] + ["label"]:
            raise ValueError(f"unexpected dataset CSV header in {stem}.csv")
        rows, labels = [], []
        for row in reader:
            rows.append([float(v) for v in row[:d]])
            labels.append(int(row[d]))
    stats = sidecar.get("norm_stats")
    return Dataset(
        features=np.array(rows) if rows else np.zeros((0, d)),
        labels=np.array(labels, dtype=int),
        num_classes=int(sidecar["num_classes"]),
        feature_names=list(sidecar["feature_names"]),
        norm_stats=NormStats.from_doc(stats) if stats else None,
    )
