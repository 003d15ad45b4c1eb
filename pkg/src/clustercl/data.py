"""Sensor data ingestion, windowing, subject splits and label budgets.

Recordings come from one of the supported layouts (UCI-HAR raw inertial
signals, the normalized CSV interchange layout, or the built-in synthetic
generator), get segmented into fixed-length windows, and are routed into
subject-disjoint train/val/test splits. Window order is a deterministic
function of file order, so any parallel ingestion must preserve it.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .config import SyntheticConfig
from .container import read_container, write_container
from .errors import ConfigError, DataError
from .seeding import rng_for

logger = logging.getLogger(__name__)

CSV_HEADER = ["t", "ax", "ay", "az", "gx", "gy", "gz"]
CSV_FILENAME_RE = re.compile(r"(?P<subject>[A-Za-z0-9-]+)_(?P<activity>\d+)_(?P<trial>[A-Za-z0-9-]+)\.csv$")

_UCI_SIGNALS = [
    "total_acc_x", "total_acc_y", "total_acc_z",
    "body_gyro_x", "body_gyro_y", "body_gyro_z",
]


@dataclass
class SensorRecording:
    """One continuous multichannel recording of a single subject/activity."""

    subject_id: str
    activity_label: int
    channels: np.ndarray  # [time x C], float32, finite
    sample_rate_hz: int

    def __len__(self) -> int:
        return self.channels.shape[0]


@dataclass
class SensorWindow:
    """Fixed-length segment cut from a recording."""

    values: np.ndarray  # [W x C]
    activity_label: int
    subject_id: str


@dataclass
class WindowedDataset:
    """Column-oriented window store; indexing yields SensorWindow views."""

    values: np.ndarray  # [n x W x C] float32
    labels: np.ndarray  # [n] int64
    subjects: np.ndarray  # [n] unicode
    class_count: int
    window_length: int
    stride: int

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> SensorWindow:
        return SensorWindow(self.values[i], int(self.labels[i]), str(self.subjects[i]))

    def __iter__(self) -> Iterator[SensorWindow]:
        for i in range(len(self)):
            yield self[i]

    @property
    def channel_count(self) -> int:
        return self.values.shape[2]

    def subject_set(self) -> set[str]:
        return {str(s) for s in np.unique(self.subjects)}

    def take(self, indices: np.ndarray) -> "WindowedDataset":
        return replace(
            self,
            values=self.values[indices],
            labels=self.labels[indices],
            subjects=self.subjects[indices],
        )


@dataclass
class SplitSpec:
    """Subject routing for train/val/test plus the downstream label budget."""

    train_subjects: frozenset[str]
    val_subjects: frozenset[str]
    test_subjects: frozenset[str]
    label_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        sets = [self.train_subjects, self.val_subjects, self.test_subjects]
        for a in range(3):
            for b in range(a + 1, 3):
                common = set(sets[a]) & set(sets[b])
                if common:
                    raise ConfigError(f"split subject sets overlap: {sorted(common)}")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ConfigError("label_fraction must be in (0, 1]")

    def all_subjects(self) -> set[str]:
        return set(self.train_subjects) | set(self.val_subjects) | set(self.test_subjects)


@dataclass
class DatasetSplits:
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset

    def items(self):
        return (("train", self.train), ("val", self.val), ("test", self.test))


@dataclass
class IngestResult(Sequence):
    """Recordings plus ingestion bookkeeping; behaves as a sequence of recordings."""

    recordings: list[SensorRecording]
    dropped_rows: int = 0
    rejected_files: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.recordings)

    def __getitem__(self, i):
        return self.recordings[i]


# ---------------------------------------------------------------------------
# ingestion


def ingest(dataset_root: str | Path | None, dataset_name: str,
           synthetic: SyntheticConfig | None = None, seed: int = 0) -> IngestResult:
    """Read all recordings for the named dataset layout.

    Rows containing NaN/Inf are dropped and counted; files whose channel
    count disagrees with the rest are rejected per-file and reported.
    """
    if dataset_name == "synthetic":
        cfg = synthetic or SyntheticConfig()
        return IngestResult(generate_synthetic(cfg, seed=seed))
    if dataset_root is None:
        raise ConfigError(f"dataset {dataset_name!r} requires a root directory")
    root = Path(dataset_root)
    if not root.is_dir():
        raise ConfigError(f"dataset root does not exist: {root}")
    if dataset_name == "uci_har":
        return _read_uci_har(root)
    if dataset_name in ("csv", "usc_had", "motion_sense"):
        # usc_had / motion_sense ship in the normalized CSV interchange layout
        return _read_csv_layout(root, sample_rate_hz=100 if dataset_name == "usc_had" else 50)
    raise ConfigError(f"unknown dataset name: {dataset_name!r}")


def generate_synthetic(cfg: SyntheticConfig, seed: int = 0) -> list[SensorRecording]:
    """Separable multi-class recordings: sinusoid / noise-burst / step signatures.

    Classes cycle through the three signature families with rising base
    frequency; subjects differ by gain so subject splits stay non-trivial.
    """
    rng = rng_for(seed, "synthetic")
    t = np.arange(cfg.length, dtype=np.float64) / cfg.sample_rate_hz
    recordings = []
    for subject in range(cfg.subjects):
        gain = 0.8 + 0.1 * subject
        for label in range(cfg.classes):
            family = label % 3
            freq = 1.0 + 0.7 * label
            for _ in range(cfg.trials):
                chans = np.empty((cfg.length, cfg.channels), dtype=np.float64)
                for c in range(cfg.channels):
                    phase = rng.uniform(0, 2 * np.pi)
                    base = 2 * np.pi * freq * (1 + 0.15 * c) * t + phase
                    if family == 0:
                        sig = np.sin(base)
                    elif family == 1:
                        sig = rng.normal(0.0, 1.0, size=cfg.length)
                    else:
                        sig = np.sign(np.sin(base))
                    chans[:, c] = gain * sig
                chans += rng.normal(0.0, cfg.noise, size=chans.shape)
                recordings.append(SensorRecording(
                    subject_id=f"s{subject}",
                    activity_label=label,
                    channels=chans.astype(np.float32),
                    sample_rate_hz=cfg.sample_rate_hz,
                ))
    return recordings


def _read_uci_har(root: Path) -> IngestResult:
    """UCI-HAR raw inertial-signals layout (train/ + test/, 6 channels)."""
    if not (root / "train").is_dir() and (root / "UCI HAR Dataset").is_dir():
        root = root / "UCI HAR Dataset"
    recordings: list[SensorRecording] = []
    dropped = 0
    for part in ("train", "test"):
        part_dir = root / part
        if not part_dir.is_dir():
            raise DataError(f"uci_har layout missing {part_dir}")
        signals = []
        for name in _UCI_SIGNALS:
            f = part_dir / "Inertial Signals" / f"{name}_{part}.txt"
            if not f.is_file():
                raise DataError(f"uci_har layout missing {f}")
            signals.append(np.loadtxt(f, dtype=np.float64))
        stacked = np.stack(signals, axis=-1)  # [n x 128 x 6]
        labels = np.loadtxt(part_dir / f"y_{part}.txt", dtype=np.int64) - 1
        subjects = np.loadtxt(part_dir / f"subject_{part}.txt", dtype=np.int64)
        if not (stacked.shape[0] == labels.shape[0] == subjects.shape[0]):
            raise DataError(f"uci_har {part} row counts disagree")
        for i in range(stacked.shape[0]):
            chans, d = _drop_bad_rows(stacked[i])
            dropped += d
            recordings.append(SensorRecording(
                subject_id=f"s{int(subjects[i]):02d}",
                activity_label=int(labels[i]),
                channels=chans.astype(np.float32),
                sample_rate_hz=50,
            ))
    if dropped:
        logger.warning("uci_har ingestion dropped %d non-finite rows", dropped)
    return IngestResult(recordings, dropped_rows=dropped)


def _read_csv_layout(root: Path, sample_rate_hz: int) -> IngestResult:
    """Normalized CSV layout: one `<subject>_<activity>_<trial>.csv` per trial.

    Header row must be `t,ax,ay,az,gx,gy,gz`; the time column is discarded.
    """
    files = sorted(root.rglob("*.csv"))
    if not files:
        raise DataError(f"no .csv files under {root}")
    recordings: list[SensorRecording] = []
    rejected: list[str] = []
    dropped = 0
    expected_cols = len(CSV_HEADER)
    for f in files:
        m = CSV_FILENAME_RE.search(f.name)
        if m is None:
            rejected.append(f"{f}: filename does not match subject_activity_trial.csv")
            continue
        header = f.open().readline().strip().split(",")
        if [h.strip() for h in header] != CSV_HEADER:
            rejected.append(f"{f}: header {header!r} != {CSV_HEADER!r}")
            continue
        raw = np.genfromtxt(f, delimiter=",", skip_header=1, dtype=np.float64)
        raw = np.atleast_2d(raw)
        if raw.shape[1] != expected_cols:
            rejected.append(f"{f}: expected {expected_cols} columns, found {raw.shape[1]}")
            continue
        chans, d = _drop_bad_rows(raw[:, 1:])  # drop the time column
        dropped += d
        recordings.append(SensorRecording(
            subject_id=m.group("subject"),
            activity_label=int(m.group("activity")),
            channels=chans.astype(np.float32),
            sample_rate_hz=sample_rate_hz,
        ))
    for msg in rejected:
        logger.warning("rejected %s", msg)
    if dropped:
        logger.warning("csv ingestion dropped %d non-finite rows", dropped)
    if not recordings:
        raise DataError(f"every file under {root} was rejected")
    return IngestResult(recordings, dropped_rows=dropped, rejected_files=rejected)


def _drop_bad_rows(channels: np.ndarray) -> tuple[np.ndarray, int]:
    keep = np.isfinite(channels).all(axis=1)
    return channels[keep], int((~keep).sum())


# ---------------------------------------------------------------------------
# windowing / splitting / budgets


def window_stride(window_length: int, overlap_fraction: float) -> int:
    # round() per contract; clamped to 1 so extreme overlaps cannot stall
    return max(1, round(window_length * (1.0 - overlap_fraction)))


def window(recordings: Sequence[SensorRecording], window_length: int,
           overlap_fraction: float) -> WindowedDataset:
    """Segment recordings into windows of exactly ``window_length`` samples.

    A recording of length L yields floor((L - W)/S) + 1 windows with
    S = round(W * (1 - overlap)); window i covers samples [i*S, i*S + W).
    Recordings shorter than W are skipped and counted. Ragged tails are
    dropped, never padded.
    """
    if window_length <= 0:
        raise ConfigError("window_length must be positive")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ConfigError("overlap_fraction must be in [0, 1)")
    if len(recordings) == 0:
        raise DataError("no recordings to window")
    stride = window_stride(window_length, overlap_fraction)
    chunks, labels, subjects = [], [], []
    skipped = 0
    for rec in recordings:
        length = len(rec)
        if length < window_length:
            skipped += 1
            continue
        count = (length - window_length) // stride + 1
        for i in range(count):
            chunks.append(rec.channels[i * stride: i * stride + window_length])
            labels.append(rec.activity_label)
            subjects.append(rec.subject_id)
    if skipped:
        logger.warning("skipped %d recordings shorter than %d samples", skipped, window_length)
    if not chunks:
        channel_count = recordings[0].channels.shape[1]
        values = np.zeros((0, window_length, channel_count), dtype=np.float32)
        return WindowedDataset(values, np.zeros(0, np.int64), np.zeros(0, "<U1"),
                               class_count=0, window_length=window_length, stride=stride)
    values = np.stack(chunks).astype(np.float32)
    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise DataError("negative activity labels are not supported")
    return WindowedDataset(
        values=values,
        labels=labels_arr,
        subjects=np.asarray(subjects),
        class_count=int(labels_arr.max()) + 1,
        window_length=window_length,
        stride=stride,
    )


def make_split_spec(subjects: set[str], val_subjects: Sequence[str] | None = None,
                    test_subjects: Sequence[str] | None = None, val_fraction: float = 0.2,
                    test_fraction: float = 0.2, seed: int = 0,
                    label_fraction: float = 1.0) -> SplitSpec:
    """Build a SplitSpec from explicit subject lists or random fractions.

    When sampling, test subjects are drawn first, then validation subjects
    from the remainder; everything left goes to train.
    """
    pool = sorted(subjects)
    if test_subjects is None:
        rng = rng_for(seed, "split", "test")
        n_test = max(1, round(test_fraction * len(pool))) if test_fraction > 0 else 0
        test = sorted(rng.choice(pool, size=n_test, replace=False).tolist())
    else:
        test = sorted(set(test_subjects))
    remainder = [s for s in pool if s not in set(test)]
    if val_subjects is None:
        rng = rng_for(seed, "split", "val")
        n_val = max(1, round(val_fraction * len(remainder))) if val_fraction > 0 else 0
        val = sorted(rng.choice(remainder, size=n_val, replace=False).tolist())
    else:
        val = sorted(set(val_subjects))
    train = [s for s in remainder if s not in set(val)]
    spec = SplitSpec(
        train_subjects=frozenset(train),
        val_subjects=frozenset(val),
        test_subjects=frozenset(test),
        label_fraction=label_fraction,
        seed=seed,
    )
    unknown = spec.all_subjects() - subjects
    if unknown:
        raise ConfigError(f"split spec names unknown subjects: {sorted(unknown)}")
    return spec


def split(dataset: WindowedDataset, spec: SplitSpec) -> DatasetSplits:
    """Route windows to train/val/test by subject id only."""
    present = dataset.subject_set()
    unknown = spec.all_subjects() - present
    if unknown:
        raise ConfigError(f"split spec names unknown subjects: {sorted(unknown)}")
    uncovered = present - spec.all_subjects()
    if uncovered:
        raise ConfigError(f"split spec does not cover subjects: {sorted(uncovered)}")

    def select(members: frozenset[str]) -> WindowedDataset:
        mask = np.isin(dataset.subjects, sorted(members))
        return dataset.take(np.flatnonzero(mask))

    out = DatasetSplits(select(spec.train_subjects), select(spec.val_subjects),
                        select(spec.test_subjects))
    for name, part in (("val", out.val), ("test", out.test)):
        if len(part) == 0:
            logger.warning("%s split is empty", name)
    return out


def label_budget(train: WindowedDataset, fraction: float, seed: int) -> WindowedDataset:
    """Stratified random subset: max(1, round(fraction * n_c)) windows per class.

    Original window order is preserved, so the result is a literal sub-slice
    of the input. fraction = 1.0 returns the dataset unchanged.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("label fraction must be in (0, 1]")
    if fraction == 1.0:
        return train
    keep: list[np.ndarray] = []
    for c in range(train.class_count):
        idx = np.flatnonzero(train.labels == c)
        if idx.size == 0:
            raise DataError(f"class {c} has no windows in the train split")
        n_keep = max(1, round(fraction * idx.size))
        rng = rng_for(seed, "budget", c)
        keep.append(rng.choice(idx, size=n_keep, replace=False))
    order = np.sort(np.concatenate(keep))
    return train.take(order)


# ---------------------------------------------------------------------------
# normalization + dataset cache


@dataclass
class ChannelStats:
    mean: np.ndarray  # [C]
    std: np.ndarray  # [C]


def fit_channel_stats(train: WindowedDataset) -> ChannelStats:
    mean = train.values.mean(axis=(0, 1), dtype=np.float64)
    std = train.values.std(axis=(0, 1), dtype=np.float64)
    return ChannelStats(mean=mean, std=np.maximum(std, 1e-8))


def apply_channel_stats(splits: DatasetSplits, stats: ChannelStats) -> DatasetSplits:
    def norm(ds: WindowedDataset) -> WindowedDataset:
        values = ((ds.values - stats.mean) / stats.std).astype(np.float32)
        return replace(ds, values=values)

    return DatasetSplits(norm(splits.train), norm(splits.val), norm(splits.test))


def channel_names(count: int) -> list[str]:
    return CSV_HEADER[1:] if count == 6 else [f"ch{i}" for i in range(count)]


def save_dataset_cache(path: str | Path, splits: DatasetSplits, spec: SplitSpec,
                       dataset_name: str, seed: int, stats: ChannelStats | None = None,
                       extra: dict | None = None) -> None:
    ref = splits.train
    manifest = {
        "kind": "windowed-dataset-cache",
        "format_version": 1,
        "dataset": dataset_name,
        "window_length": ref.window_length,
        "stride": ref.stride,
        "class_count": ref.class_count,
        "channel_names": channel_names(ref.channel_count),
        "seed": seed,
        "split_spec": {
            "train_subjects": sorted(spec.train_subjects),
            "val_subjects": sorted(spec.val_subjects),
            "test_subjects": sorted(spec.test_subjects),
            "label_fraction": spec.label_fraction,
            "seed": spec.seed,
        },
        "normalization": None if stats is None else {
            "mean": stats.mean.tolist(),
            "std": stats.std.tolist(),
        },
        "counts": {name: len(part) for name, part in splits.items()},
    }
    if extra:
        manifest.update(extra)
    tensors = {}
    for name, part in splits.items():
        tensors[f"{name}/values"] = part.values
        tensors[f"{name}/labels"] = part.labels
        tensors[f"{name}/subjects"] = part.subjects.astype(str)
    write_container(path, manifest, tensors)


def load_dataset_cache(path: str | Path) -> tuple[DatasetSplits, dict]:
    manifest, tensors = read_container(path)
    if manifest.get("kind") != "windowed-dataset-cache":
        raise DataError(f"{path} is not a dataset cache")

    def part(name: str) -> WindowedDataset:
        return WindowedDataset(
            values=tensors[f"{name}/values"],
            labels=tensors[f"{name}/labels"],
            subjects=tensors[f"{name}/subjects"],
            class_count=manifest["class_count"],
            window_length=manifest["window_length"],
            stride=manifest["stride"],
        )

    return DatasetSplits(part("train"), part("val"), part("test")), manifest


def prepare_dataset(*, dataset: str, root: str | None, window_length: int, overlap: float,
                    val_subjects: Sequence[str] | None, test_subjects: Sequence[str] | None,
                    val_fraction: float, test_fraction: float, seed: int, normalize: bool,
                    synthetic: SyntheticConfig | None, out_path: str | Path) -> dict:
    """Full ingestion pipeline: ingest -> window -> split -> normalize -> cache."""
    result = ingest(root, dataset, synthetic=synthetic, seed=seed)
    windows = window(result.recordings, window_length, overlap)
    subjects = windows.subject_set()
    if val_subjects is None and test_subjects is None and dataset == "usc_had" \
            and {"11", "12", "13", "14"} <= subjects:
        val_subjects, test_subjects = ["11", "12"], ["13", "14"]
    spec = make_split_spec(subjects, val_subjects=val_subjects, test_subjects=test_subjects,
                           val_fraction=val_fraction, test_fraction=test_fraction, seed=seed)
    splits = split(windows, spec)
    stats = None
    if normalize:
        stats = fit_channel_stats(splits.train)
        splits = apply_channel_stats(splits, stats)
    save_dataset_cache(out_path, splits, spec, dataset, seed, stats=stats,
                       extra={"dropped_rows": result.dropped_rows,
                              "rejected_files": result.rejected_files})
    return {
        "cache_path": str(out_path),
        "window_length": windows.window_length,
        "stride": windows.stride,
        "class_count": windows.class_count,
        "counts": {name: len(part) for name, part in splits.items()},
        "dropped_rows": result.dropped_rows,
        "rejected_files": result.rejected_files,
    }
