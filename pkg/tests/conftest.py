import os

import numpy as np
import pytest

from clustercl.config import SyntheticConfig
from clustercl.data import WindowedDataset, ingest, window


@pytest.fixture(scope="session", autouse=True)
def isolated_output_root(tmp_path_factory):
    """Keep the default output root out of the working tree during tests."""
    old = os.environ.get("CLUSTERCL_OUTPUT_DIR")
    os.environ["CLUSTERCL_OUTPUT_DIR"] = str(tmp_path_factory.mktemp("output_root"))
    yield
    if old is None:
        os.environ.pop("CLUSTERCL_OUTPUT_DIR", None)
    else:
        os.environ["CLUSTERCL_OUTPUT_DIR"] = old


def random_unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_windowed(values, labels, subjects, class_count=None, window_length=None, stride=1):
    values = np.asarray(values, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    return WindowedDataset(
        values=values,
        labels=labels,
        subjects=np.asarray(subjects),
        class_count=class_count if class_count is not None else int(labels.max()) + 1,
        window_length=window_length if window_length is not None else values.shape[1],
        stride=stride,
    )


@pytest.fixture(scope="session")
def tiny_windows() -> WindowedDataset:
    """~430 windows of 3-class synthetic data, W=32, C=6, 4 subjects."""
    cfg = SyntheticConfig(classes=3, subjects=4, trials=4, length=160)
    recs = ingest(None, "synthetic", synthetic=cfg, seed=11)
    return window(recs.recordings, 32, 0.5)


def write_uci_layout(root, subjects=30, rows_per_subject=2, window_len=128, seed=0):
    """Minimal raw inertial-signals tree: 6 signal files per part + labels/subjects."""
    rng = np.random.default_rng(seed)
    signals = ["total_acc_x", "total_acc_y", "total_acc_z",
               "body_gyro_x", "body_gyro_y", "body_gyro_z"]
    for part, subject_ids in (("train", range(1, subjects - 4 + 1)),
                              ("test", range(subjects - 4 + 1, subjects + 1))):
        part_dir = root / part / "Inertial Signals"
        part_dir.mkdir(parents=True)
        subject_col, label_col = [], []
        for s in subject_ids:
            for r in range(rows_per_subject):
                subject_col.append(s)
                label_col.append((s + r) % 6 + 1)
        count = len(subject_col)
        for name in signals:
            np.savetxt(part_dir / f"{name}_{part}.txt", rng.normal(size=(count, window_len)))
        np.savetxt(root / part / f"y_{part}.txt", np.asarray(label_col), fmt="%d")
        np.savetxt(root / part / f"subject_{part}.txt", np.asarray(subject_col), fmt="%d")
    return root
