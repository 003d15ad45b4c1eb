"""Deterministic seed derivation.

Every run owns a single root seed; each consumer (shuffling, augmentation,
per-batch clustering, model init, eval repeats, ...) derives its own stream
from the root seed plus a string/int label path. Derivation is a stable hash,
so adding a new consumer never shifts the streams of existing ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

# scikit-learn wants random_state in [0, 2**32); keep within int32 for torch too
_SEED_MOD = 2**31 - 1


def derive_seed(root_seed: int, *labels: str | int) -> int:
    """Derive a child seed from the root seed and a label path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little") % _SEED_MOD


def rng_for(root_seed: int, *labels: str | int) -> np.random.Generator:
    """NumPy generator seeded from the derived child seed."""
    return np.random.default_rng(derive_seed(root_seed, *labels))
