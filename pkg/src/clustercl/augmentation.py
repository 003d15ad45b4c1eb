"""Two-branch view generation with resampling augmentation.

Branch 1 passes windows through unchanged; branch 2 re-times each window by a
random factor, simulating the same activity performed faster or slower. With
``symmetric_aug`` both branches draw their own factors.
"""

from __future__ import annotations

import numpy as np

from .config import AugConfig
from .data import SensorWindow
from .errors import ConfigError


def resample(values: np.ndarray, factor: float) -> np.ndarray:
    """Linearly re-time a [W x C] window by ``factor``, keeping shape [W x C].

    Each channel is interpolated at M = round(W * factor) uniform positions
    spanning the original window. M > W center-crops back to W; M < W pads by
    repeating the final sample.
    """
    if factor <= 0:
        raise ConfigError(f"resample factor must be positive, got {factor}")
    w = values.shape[0]
    m = max(2, round(w * factor))
    if m == w:
        return values.copy()
    src = np.arange(w, dtype=np.float64)
    pos = np.arange(m, dtype=np.float64) * (w - 1) / (m - 1)
    out = np.empty((m, values.shape[1]), dtype=np.float64)
    for c in range(values.shape[1]):
        out[:, c] = np.interp(pos, src, values[:, c].astype(np.float64))
    if m > w:
        start = (m - w) // 2
        out = out[start:start + w]
    else:
        out = np.concatenate([out, np.repeat(out[-1:], w - m, axis=0)])
    return out.astype(values.dtype)


def resample_window(wdw: SensorWindow, factor: float) -> SensorWindow:
    """resample() on a SensorWindow; label and subject carry over."""
    return SensorWindow(resample(wdw.values, factor), wdw.activity_label, wdw.subject_id)


def make_views(batch: np.ndarray, cfg: AugConfig,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Produce the two augmentation branches for a [B x W x C] batch.

    view1[i] and view2[i] always originate from batch[i] (the positive pair).
    """
    if batch.shape[0] == 0:
        raise ConfigError("batch must be nonempty")
    view2 = _resample_batch(batch, cfg, rng)
    view1 = _resample_batch(batch, cfg, rng) if cfg.symmetric_aug else batch.copy()
    return view1, view2


def _resample_batch(batch: np.ndarray, cfg: AugConfig, rng: np.random.Generator) -> np.ndarray:
    factors = rng.uniform(cfg.factor_min, cfg.factor_max, size=batch.shape[0])
    out = np.empty_like(batch)
    for i in range(batch.shape[0]):
        out[i] = resample(batch[i], float(factors[i]))
    return out
