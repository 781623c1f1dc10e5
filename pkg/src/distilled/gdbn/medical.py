"""Medical data fusion: corrupted partitions in, one complete synthetic dataset out."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from distilled.core import DBN_VARIABLE, Column, InferenceTaskBinding, SyntheticDataset
from distilled.gdbn.em import em_impute
from distilled.gdbn.learn import fit_parameters, learn_structure
from distilled.gdbn.model import GaussianDbn, column_names, log_likelihood
from distilled.seeding import derive_seed
from distilled.zo import ZoConfig, zo_distill

TOTAL_LIKELIHOOD = "total-likelihood"


@dataclass(frozen=True, eq=False)
class PartitionedTrainSet:
    """K partitions with NaN in their hidden columns.

    ``source_rows[k]`` holds the row indices of partition k in the source matrix.
    """

    partitions: tuple[np.ndarray, ...]
    hidden_vars: tuple[frozenset[int], ...]
    noise_std: float
    source_rows: tuple[np.ndarray, ...]

    @property
    def n_rows(self) -> int:
        return sum(p.shape[0] for p in self.partitions)

    @property
    def n_cols(self) -> int:
        return self.partitions[0].shape[1]

    def visible_fraction(self, k: int) -> float:
        return 1.0 - len(self.hidden_vars[k]) / self.n_cols

    def reassemble(self) -> np.ndarray:
        out = np.empty((self.n_rows, self.n_cols))
        for part, rows in zip(self.partitions, self.source_rows):
            out[rows] = part
        return out

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All rows stacked in partition order, with each row's partition id."""
        data = np.vstack(self.partitions)
        pid = np.concatenate([np.full(p.shape[0], k) for k, p in enumerate(self.partitions)])
        return data, pid


def corrupt_partitions(
    clean: np.ndarray, k: int, hide_frac: float, noise_std: float, seed: int
) -> PartitionedTrainSet:
    """Round-robin split into ``k`` partitions; each hides its own random columns
    and adds N(0, noise_std^2) to every visible entry."""
    clean = np.asarray(clean, dtype=float)
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= hide_frac < 1.0:
        raise ValueError("hide_frac must be in [0, 1)")
    n_rows, n_cols = clean.shape
    n_hide = math.ceil(hide_frac * n_cols - 1e-12)
    if n_hide >= n_cols:
        raise ValueError(f"hide_frac={hide_frac} would mask all {n_cols} columns")
    rng = np.random.default_rng(seed)
    parts, hidden, rows_of = [], [], []
    for i in range(k):
        rows = np.arange(i, n_rows, k)
        cols = rng.choice(n_cols, size=n_hide, replace=False)
        block = clean[rows].copy()
        if noise_std > 0:
            block += noise_std * rng.standard_normal(block.shape)
        block[:, cols] = np.nan
        parts.append(block)
        hidden.append(frozenset(int(c) for c in cols))
        rows_of.append(rows)
    return PartitionedTrainSet(tuple(parts), tuple(hidden), float(noise_std), tuple(rows_of))


def fit_dbn(data: np.ndarray, n_vars: int, n_slices: int, max_parents: int = 3) -> GaussianDbn:
    """Structure + parameter learning on complete data."""
    structure = learn_structure(data, n_vars, n_slices, max_parents)
    return fit_parameters(data, structure)


def mean_test_ll(data: np.ndarray, test: np.ndarray, n_vars: int, n_slices: int,
                 max_parents: int = 3) -> float:
    """Mean per-observation log-likelihood of ``test`` under the DBN learned from ``data``."""
    model = fit_dbn(data, n_vars, n_slices, max_parents)
    return log_likelihood(model, test) / test.shape[0]


def dd_loss_eval(
    d_hat: SyntheticDataset,
    subsample: np.ndarray,
    validation: np.ndarray | None = None,
    *,
    n_vars: int,
    n_slices: int,
    task: str = TOTAL_LIKELIHOOD,
    max_parents: int = 3,
    em_iters: int = 3,
) -> float:
    """One distillation-loss evaluation.

    Learns a DBN on ``d_hat``, EM-imputes the masked entries of
    ``subsample`` and returns the negative mean log-likelihood of
    ``validation`` under the learned DBN. Without an explicit validation
    matrix the imputed subsample is scored.
    """
    if task != TOTAL_LIKELIHOOD:
        raise ValueError(f"unsupported inference task {task!r}")
    # a degenerate D-hat (overflowing moments, zero variance) scores +inf,
    # which the optimizer reports as divergence
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            model = fit_dbn(d_hat.values, n_vars, n_slices, max_parents)
            completed, _ = em_impute(model, subsample, max_iters=em_iters)
        except (ValueError, np.linalg.LinAlgError):
            return math.inf
        target = completed if validation is None else np.asarray(validation, dtype=float)
        value = -log_likelihood(model, target) / target.shape[0]
    return value if math.isfinite(value) else math.inf


def medical_binding(
    n_vars: int, n_slices: int, *, validation: np.ndarray | None = None,
    max_parents: int = 3, em_iters: int = 3,
) -> InferenceTaskBinding:
    def evaluate(d_hat: SyntheticDataset, batch: np.ndarray, seed: int) -> float:
        return dd_loss_eval(
            d_hat, batch, validation, n_vars=n_vars, n_slices=n_slices,
            max_parents=max_parents, em_iters=em_iters,
        )

    return InferenceTaskBinding(
        TOTAL_LIKELIHOOD, evaluate, {"n_vars": n_vars, "n_slices": n_slices}
    )


def dbn_schema(n_vars: int, n_slices: int) -> tuple[Column, ...]:
    return tuple(Column(name, DBN_VARIABLE) for name in column_names(n_vars, n_slices))


def initial_synthetic(train: PartitionedTrainSet, ipc: int, n_vars: int, n_slices: int,
                      seed: int) -> SyntheticDataset:
    """``ipc`` rows drawn across partitions in proportion to their size; masked
    entries replaced by N(0, 1) draws."""
    if ipc < 2:
        raise ValueError("ipc must be >= 2")
    if ipc > train.n_rows:
        raise ValueError(f"ipc={ipc} exceeds the {train.n_rows} available training rows")
    rng = np.random.default_rng(seed)
    sizes = np.array([p.shape[0] for p in train.partitions], dtype=float)
    quota = ipc * sizes / sizes.sum()
    alloc = np.floor(quota).astype(int)
    for i in np.argsort(-(quota - alloc), kind="stable")[: ipc - alloc.sum()]:
        alloc[i] += 1
    rows = []
    for part, a in zip(train.partitions, alloc):
        if a:
            rows.append(part[rng.choice(part.shape[0], size=a, replace=False)])
    values = np.vstack(rows)
    miss = np.isnan(values)
    values[miss] = rng.standard_normal(int(miss.sum()))
    return SyntheticDataset(values, dbn_schema(n_vars, n_slices))


def weighted_subsampler(
    train: PartitionedTrainSet, binding: InferenceTaskBinding, batch_rows: int
) -> Callable[[int, np.random.Generator], tuple[InferenceTaskBinding, np.ndarray]]:
    """Per-iteration subsamples; a row's weight is its partition's visible-column fraction."""
    data, pid = train.stacked()
    w = np.array([train.visible_fraction(int(k)) for k in pid])
    p = w / w.sum()
    size = min(batch_rows, data.shape[0])

    def sample(k: int, rng: np.random.Generator):
        idx = np.sort(rng.choice(data.shape[0], size=size, replace=False, p=p))
        return binding, data[idx]

    return sample


def distill_medical(
    train: PartitionedTrainSet,
    ipc: int,
    zo_cfg: ZoConfig,
    seed: int,
    *,
    n_vars: int,
    n_slices: int,
    batch_rows: int = 100,
    max_parents: int = 3,
    em_iters: int = 3,
    callback=None,
) -> tuple[SyntheticDataset, list[tuple[int, float]]]:
    d_init = initial_synthetic(train, ipc, n_vars, n_slices, derive_seed(seed, "init"))
    binding = medical_binding(n_vars, n_slices, max_parents=max_parents, em_iters=em_iters)
    sampler = weighted_subsampler(train, binding, batch_rows)
    return zo_distill(sampler, d_init, zo_cfg, derive_seed(seed, "zo"), callback=callback)
