"""Budgeted (1+1) evolution strategy with one-fifth success rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from distilled.core import SyntheticDataset


@dataclass(frozen=True)
class DfoConfig:
    budget: int = 20
    mutation_scale: float = 0.1
    scale_adapt: float = 1.5

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not self.mutation_scale > 0:
            raise ValueError("mutation_scale must be > 0")
        if not self.scale_adapt > 1:
            raise ValueError("scale_adapt must be > 1")


def dfo_search(
    loss: Callable[[SyntheticDataset], float],
    d_init: SyntheticDataset,
    cfg: DfoConfig,
    seed: int,
    callback: Callable[[int, SyntheticDataset, float], None] | None = None,
) -> tuple[SyntheticDataset, float, list[tuple[int, float, float]]]:
    """Minimise ``loss`` with budget + 1 evaluations (the first at ``d_init``).

    Returns the incumbent, its loss, and a trace of
    ``(evaluation index, candidate loss, best loss so far)``.
    ``callback(n_evals, incumbent, best_loss)`` fires after every evaluation.
    Since the random stream does not depend on the budget, a run with budget
    B reproduces the prefix of any longer run with the same seed.
    """
    best = d_init
    best_loss = float(loss(d_init))
    if not math.isfinite(best_loss):
        raise ValueError(f"loss at d_init is not finite ({best_loss})")
    trace = [(0, best_loss, best_loss)]
    if callback is not None:
        callback(1, best, best_loss)
    rng = np.random.default_rng(seed)
    scale = cfg.mutation_scale
    shrink = cfg.scale_adapt ** -0.25
    for i in range(1, cfg.budget + 1):
        step = rng.standard_normal(best.values.shape)
        cand = best.with_values(best.values + scale * step)
        val = float(loss(cand))
        if math.isfinite(val) and val < best_loss:
            best, best_loss = cand, val
            scale *= cfg.scale_adapt
        else:
            scale *= shrink
        trace.append((i, val, best_loss))
        if callback is not None:
            callback(i + 1, best, best_loss)
    return best, best_loss, trace
