"""Stable seed derivation.

Child seeds are the first 8 bytes (big endian) of
``sha256(f"{parent}/{key}")``, masked to 63 bits so they fit every
integer seed API in numpy.
"""

from __future__ import annotations

import hashlib
from typing import Hashable, Iterable

_MASK = (1 << 63) - 1


def derive_seed(parent: int, key: Hashable) -> int:
    digest = hashlib.sha256(f"{int(parent)}/{key}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & _MASK


def seed_plan(root_seed: int, labels: Iterable[str]) -> dict[str, int]:
    """Map each label to its own child seed of ``root_seed``."""
    labels = list(labels)
    if len(set(labels)) != len(labels):
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        raise ValueError(f"duplicate seed labels: {dupes}")
    plan = {lab: derive_seed(root_seed, lab) for lab in labels}
    if len(set(plan.values())) != len(plan):
        raise ValueError("seed collision across labels")
    return plan
