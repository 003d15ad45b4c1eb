"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately slow and scalar: explicit python loops,
64-bit math, exact exclusion of masked candidates (no large-constant
subtraction). None of it shares code with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations

import numpy as np


def pair_excluded(i: int, j: int, labels, confident) -> bool:
    """Candidate j shares anchor i's cluster with both ends confident."""
    if labels is None:
        return False
    if confident is not None and not (confident[i] and confident[j]):
        return False
    return labels[i] == labels[j]


def loss_oracle(p1, p2, temperature, labels1=None, confident1=None,
                labels2=None, confident2=None):
    """Per-anchor contrastive losses via explicit candidate loops.

    labels*=None means plain instance discrimination (only self excluded).
    When labels2 is None the anchor-1 assignment is reused for the
    second (swapped) term. Returns (total, per_anchor[2N]) in float64.
    """
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    n = p1.shape[0]
    if labels2 is None and labels1 is not None:
        labels2, confident2 = labels1, confident1
    per_anchor = []
    for anchors, others, labels, confident in ((p1, p2, labels1, confident1),
                                               (p2, p1, labels2, confident2)):
        for i in range(n):
            numerator = math.exp(float(anchors[i] @ others[i]) / temperature)
            denominator = 0.0
            for j in range(n):  # other-branch candidates; positive j == i always kept
                if j != i and pair_excluded(i, j, labels, confident):
                    continue
                denominator += math.exp(float(anchors[i] @ others[j]) / temperature)
            for j in range(n):  # own-branch candidates; self always excluded
                if j == i or pair_excluded(i, j, labels, confident):
                    continue
                denominator += math.exp(float(anchors[i] @ anchors[j]) / temperature)
            per_anchor.append(-math.log(numerator / denominator))
    return sum(per_anchor) / (2 * n), per_anchor


def confidence_oracle(points, labels, alpha):
    """Confident flags: the ceil(alpha*m/100) members of each cluster nearest
    its mean, ties resolved toward the lower index."""
    points = np.asarray(points, dtype=np.float64)
    n = len(labels)
    confident = [False] * n
    for label in sorted(set(labels)):
        members = [i for i in range(n) if labels[i] == label]
        center = points[members].mean(axis=0)
        ranked = sorted(members, key=lambda i: (float(np.linalg.norm(points[i] - center)), i))
        n_conf = min(len(members), max(0, math.ceil(Fraction(float(alpha)) * len(members) / 100)))
        for i in ranked[:n_conf]:
            confident[i] = True
    return np.asarray(confident, dtype=bool)


def macro_f1_oracle(predictions, labels, num_classes):
    """Macro F1 by per-class counting loops; F1_c = 2tp/(2tp+fp+fn), 0/0 -> 0."""
    per_class = []
    for c in range(num_classes):
        tp = fp = fn = 0
        for p, t in zip(predictions, labels):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
        denom = 2 * tp + fp + fn
        per_class.append(0.0 if denom == 0 else 2 * tp / denom)
    return sum(per_class) / num_classes, per_class


def two_means_oracle(points):
    """Optimal 2-means by enumerating every bipartition (n <= ~16)."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    best_sse, best_partition = None, None
    indices = list(range(1, n))
    for size in range(0, n - 1):
        for rest in combinations(indices, size):
            group_a = frozenset((0, *rest))
            group_b = frozenset(range(n)) - group_a
            sse = 0.0
            for group in (group_a, group_b):
                member_points = points[sorted(group)]
                sse += float(((member_points - member_points.mean(axis=0)) ** 2).sum())
            if best_sse is None or sse < best_sse:
                best_sse, best_partition = sse, (group_a, group_b)
    return best_partition, best_sse
