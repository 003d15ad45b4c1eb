"""Contrastive loss family with cluster-masked negative selection.

All three variants share one mechanism: cross-entropy over the concatenated
similarity logits [anchor-vs-other-branch | anchor-vs-own-branch], where the
positive sits on the ab diagonal and excluded candidates have a large constant
subtracted from their logits (their softmax weight underflows to zero).

* nt_xent             - only self-similarity is excluded (singleton clusters).
* cluster             - candidates sharing the anchor's cluster are excluded.
* cluster_confidence  - as cluster, but only between confident members; the
                        rest behave like nt_xent anchors/candidates.

The symmetric term swaps the branches; by default each term uses the mask
built from its own anchor branch's assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .clustering import ClusterAssignment, NegativeMask, build_mask, singleton_assignment
from .config import LossConfig
from .errors import ConfigError
from .model import ProjectionBatch

_NORM_TOL = 1e-3


@dataclass
class LossBreakdown:
    """Batch loss with per-anchor terms, ordered [branch-1 anchors | branch-2]."""

    total: torch.Tensor  # scalar = per_anchor.mean()
    per_anchor: torch.Tensor  # [2N]
    active_negatives: np.ndarray  # [2N] unmasked candidates per anchor, positive excluded

    def log_record(self, epoch: int, step: int) -> dict:
        return {
            "epoch": epoch,
            "step": step,
            "loss": float(self.total.detach()),
            "active_negatives_mean": float(self.active_negatives.mean()),
        }


def similarity_logits(p_anchor: ProjectionBatch, p_other: ProjectionBatch,
                      mask: NegativeMask, temperature: float,
                      large_num: float = 1e9) -> torch.Tensor:
    """[N x 2N] logits [ab | aa]; masked entries get ``large_num`` subtracted.

    The positive candidate for anchor i is column i.
    """
    za, zo = p_anchor.z, p_other.z
    if za.shape != zo.shape:
        raise ConfigError(f"branch shapes differ: {tuple(za.shape)} vs {tuple(zo.shape)}")
    n = za.shape[0]
    if mask.n != n:
        raise ConfigError(f"mask size {mask.n} does not match batch size {n}")
    _check_unit_rows(za)
    _check_unit_rows(zo)
    mask_ab = torch.from_numpy(mask.mask_ab).to(device=za.device, dtype=za.dtype)
    mask_aa = torch.from_numpy(mask.mask_aa).to(device=za.device, dtype=za.dtype)
    logits_ab = za @ zo.T / temperature - mask_ab * large_num
    logits_aa = za @ za.T / temperature - mask_aa * large_num
    return torch.cat([logits_ab, logits_aa], dim=1)


def contrastive_loss(p1: ProjectionBatch, p2: ProjectionBatch, cfg: LossConfig,
                     asg1: ClusterAssignment | None = None,
                     asg2: ClusterAssignment | None = None) -> LossBreakdown:
    """Symmetric batch loss; total is the mean over all 2N anchor terms.

    asg1 masks the p1-anchored term, asg2 the p2-anchored term; omitting asg2
    reuses asg1 on both. The nt_xent variant ignores assignments entirely.
    """
    n = p1.z.shape[0]
    if cfg.variant == "nt_xent":
        mask1 = mask2 = build_mask(singleton_assignment(n))
    else:
        if asg1 is None:
            raise ConfigError(f"variant {cfg.variant!r} requires a cluster assignment")
        if len(asg1) != n or (asg2 is not None and len(asg2) != n):
            raise ConfigError("assignment length does not match batch size")
        mask1 = build_mask(asg1)
        mask2 = build_mask(asg2) if asg2 is not None else mask1
    targets = torch.arange(n, device=p1.z.device)
    logits_a = similarity_logits(p1, p2, mask1, cfg.temperature, cfg.large_num)
    logits_b = similarity_logits(p2, p1, mask2, cfg.temperature, cfg.large_num)
    loss_a = F.cross_entropy(logits_a, targets, reduction="none")
    loss_b = F.cross_entropy(logits_b, targets, reduction="none")
    per_anchor = torch.cat([loss_a, loss_b])
    active = np.concatenate([_active_negatives(mask1), _active_negatives(mask2)])
    return LossBreakdown(total=per_anchor.mean(), per_anchor=per_anchor, active_negatives=active)


def confidence_loss(p1: ProjectionBatch, p2: ProjectionBatch, cfg: LossConfig,
                    asg1: ClusterAssignment, asg2: ClusterAssignment | None = None) -> LossBreakdown:
    """Confidence-thresholded variant; the semantics live in the masks, so this
    is contrastive_loss with the thresholded assignment(s) made mandatory."""
    if asg1 is None:
        raise ConfigError("confidence_loss requires a thresholded cluster assignment")
    return contrastive_loss(p1, p2, cfg, asg1, asg2)


def _active_negatives(mask: NegativeMask) -> np.ndarray:
    n = mask.n
    unmasked_ab = n - mask.mask_ab.sum(axis=1)  # includes the positive column
    unmasked_aa = n - mask.mask_aa.sum(axis=1)
    return (unmasked_ab - 1 + unmasked_aa).astype(np.int64)


def _check_unit_rows(z: torch.Tensor) -> None:
    norms = torch.linalg.vector_norm(z.detach(), dim=1)
    worst = float((norms - 1.0).abs().max())
    if worst > _NORM_TOL:
        raise ConfigError(f"projection rows must be unit-norm (max deviation {worst:.2e})")
