"""Per-mini-batch clustering and negative-exclusion mask construction.

Each batch is clustered from scratch on its own normalized projections (no
state carries across batches). Cluster labels, optionally filtered by a
confidence threshold, are turned into boolean exclusion masks: candidates
sharing the anchor's cluster are removed from the loss denominator so the
model stops treating likely-same-class windows as negatives.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from sklearn.cluster import DBSCAN, AgglomerativeClustering, Birch, KMeans

from .config import ClusterConfig
from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ClusterAssignment:
    """Cluster labels for one batch.

    ``points`` keeps the clustered projections because confidence filtering
    ranks members by distance to their centroid. ``confident`` starts all-True
    (no threshold applied); apply_confidence() replaces it.
    """

    labels: np.ndarray  # [N] int64, contiguous 0..n_clusters-1
    centroids: np.ndarray | None  # [n_clusters x D] when the backend provides them
    confident: np.ndarray  # [N] bool
    points: np.ndarray  # [N x D] float64

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass
class NegativeMask:
    """True = excluded from the denominator. aa covers anchor-vs-own-branch
    similarities (diagonal always True: self), ab covers anchor-vs-other-branch
    (diagonal always False: the positive pair survives)."""

    mask_ab: np.ndarray  # [N x N] bool
    mask_aa: np.ndarray  # [N x N] bool

    @property
    def n(self) -> int:
        return self.mask_ab.shape[0]


def singleton_assignment(n: int) -> ClusterAssignment:
    """Every sample its own cluster: reproduces plain instance discrimination."""
    return ClusterAssignment(
        labels=np.arange(n, dtype=np.int64),
        centroids=None,
        confident=np.ones(n, dtype=bool),
        points=np.zeros((n, 0), dtype=np.float64),
    )


def fit_predict(projections, cfg: ClusterConfig, seed: int = 0) -> ClusterAssignment:
    """Cluster one batch of unit-norm projections.

    Accepts a ProjectionBatch or a plain [N x D] array. Deterministic given
    ``seed``. When k exceeds the batch (or the backend fails) every sample
    falls back to its own cluster, with a warning.
    """
    x = _as_points(projections)
    n = x.shape[0]
    if n == 0:
        raise ConfigError("cannot cluster an empty batch")
    if cfg.method == "dbscan":
        labels = DBSCAN(eps=cfg.dbscan.eps, min_samples=cfg.dbscan.min_samples,
                        metric=cfg.metric).fit_predict(x)
        labels = _assign_noise_points(labels)
    else:
        k = cfg.k
        if k is None:
            raise ConfigError("cluster.k is unset; resolve it to the dataset class count first")
        if k > n:
            logger.warning("cluster.k=%d exceeds batch size %d; using one cluster per sample", k, n)
            return singleton_points(x)
        data = _unit_rows(x) if cfg.metric == "cosine" and cfg.method in ("kmeans", "birch") else x
        try:
            if cfg.method == "kmeans":
                km = KMeans(n_clusters=k, random_state=seed, n_init=10).fit(data)
                return ClusterAssignment(km.labels_.astype(np.int64), km.cluster_centers_,
                                         np.ones(n, dtype=bool), x)
            if cfg.method == "birch":
                labels = Birch(threshold=cfg.birch.threshold, branching_factor=cfg.birch.branching,
                               n_clusters=k).fit_predict(data)
            else:
                labels = AgglomerativeClustering(n_clusters=k, metric=cfg.metric,
                                                 linkage=cfg.hier.linkage).fit_predict(x)
        except Exception as exc:  # backend convergence failure -> per-sample clusters
            logger.warning("clustering backend %s failed (%s); using one cluster per sample",
                           cfg.method, exc)
            return singleton_points(x)
        labels = _contiguous(labels)
    labels = labels.astype(np.int64)
    return ClusterAssignment(labels, _label_means(x, labels), np.ones(n, dtype=bool), x)


def singleton_points(x: np.ndarray) -> ClusterAssignment:
    n = x.shape[0]
    return ClusterAssignment(np.arange(n, dtype=np.int64), x.copy(),
                             np.ones(n, dtype=bool), x)


def apply_confidence(asg: ClusterAssignment, alpha: float) -> ClusterAssignment:
    """Keep the ceil(alpha*m/100) members of each size-m cluster nearest its
    centroid as confident; ties break toward the lower batch index.

    Non-confident samples keep their labels but are ignored by build_mask, so
    they fall back to plain instance-discrimination behavior. alpha=100 keeps
    everyone; alpha=0 keeps no one.
    """
    if not 0.0 <= alpha <= 100.0:
        raise ConfigError("alpha must be in [0, 100]")
    centroids = asg.centroids
    if centroids is None:
        centroids = _label_means(asg.points, asg.labels)
    confident = np.zeros(len(asg), dtype=bool)
    for label in np.unique(asg.labels):
        idx = np.flatnonzero(asg.labels == label)
        m = idx.size
        n_conf = min(m, max(0, math.ceil(Fraction(alpha) * m / 100)))
        if n_conf == 0:
            continue
        # euclidean ranking; identical to cosine ranking for unit-norm rows
        dist = np.linalg.norm(asg.points[idx] - centroids[label], axis=1)
        order = np.argsort(dist, kind="stable")
        confident[idx[order[:n_conf]]] = True
    return replace(asg, centroids=centroids, confident=confident)


def build_mask(asg: ClusterAssignment) -> NegativeMask:
    """Exclusion masks from an assignment.

    mask_aa[i, j] is True iff i == j or (both confident and same cluster);
    mask_ab is the same matrix with the diagonal forced False. Labels are
    index-based, so they apply to the candidate block of either branch.
    """
    labels = asg.labels
    same = labels[:, None] == labels[None, :]
    both_confident = asg.confident[:, None] & asg.confident[None, :]
    aa = same & both_confident
    np.fill_diagonal(aa, True)
    ab = aa.copy()
    np.fill_diagonal(ab, False)
    return NegativeMask(mask_ab=ab, mask_aa=aa)


# ---------------------------------------------------------------------------


def _as_points(projections) -> np.ndarray:
    z = getattr(projections, "z", projections)
    if hasattr(z, "detach"):
        z = z.detach().cpu().numpy()
    x = np.asarray(z, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigError(f"expected [N x D] projections, got shape {x.shape}")
    return x


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def _assign_noise_points(labels: np.ndarray) -> np.ndarray:
    """DBSCAN noise (-1) becomes a fresh singleton cluster per point."""
    labels = labels.copy()
    next_label = labels.max() + 1 if (labels >= 0).any() else 0
    for i in np.flatnonzero(labels == -1):
        labels[i] = next_label
        next_label += 1
    return labels


def _contiguous(labels: np.ndarray) -> np.ndarray:
    _, contiguous = np.unique(labels, return_inverse=True)
    return contiguous


def _label_means(x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    n_labels = int(labels.max()) + 1 if labels.size else 0
    sums = np.zeros((n_labels, x.shape[1]), dtype=np.float64)
    counts = np.zeros(n_labels, dtype=np.float64)
    np.add.at(sums, labels, x)
    np.add.at(counts, labels, 1.0)
    # label ids with no members keep a zero centroid instead of NaN
    return sums / np.maximum(counts, 1.0)[:, None]
