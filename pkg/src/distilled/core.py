"""Dataset-distillation primitives shared by every case study.

The synthetic dataset is the decision variable; an inference-task binding
turns it into a scalar loss on one evaluation batch, and a risk measure
aggregates per-batch losses into the distillation objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from distilled.seeding import derive_seed

# column roles
INTERIOR_POINT = "interior-point"
BOUNDARY_POINT = "boundary-point"
DBN_VARIABLE = "dbn-variable"
CATEGORICAL_STATE = "categorical-state"
COORDINATE = "coordinate"
LABEL = "label"


@dataclass(frozen=True)
class Column:
    name: str
    role: str


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """A matrix of synthetic rows plus the schema describing its columns.

    ``row_roles`` is only used where rows carry different meanings
    (PINN interior vs boundary rows).
    """

    values: np.ndarray
    schema: tuple[Column, ...]
    row_roles: tuple[str, ...] | None = None
    categorical: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-d, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "schema", tuple(self.schema))
        if values.shape[0] < 1:
            raise ValueError("a synthetic dataset needs at least one row")
        if values.shape[1] != len(self.schema):
            raise ValueError(
                f"values has {values.shape[1]} columns but schema lists {len(self.schema)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("synthetic dataset entries must be finite")
        if self.row_roles is not None:
            object.__setattr__(self, "row_roles", tuple(self.row_roles))
            if len(self.row_roles) != values.shape[0]:
                raise ValueError("row_roles length must equal the number of rows")
        if self.categorical and not np.all(np.isin(values, (0.0, 1.0, 2.0))):
            raise ValueError("categorical entries must lie in {0, 1, 2}")
        values.setflags(write=False)

    @property
    def ipc(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.schema]

    def with_values(self, values: np.ndarray) -> "SyntheticDataset":
        return replace(self, values=values)


@dataclass(frozen=True)
class RiskMeasure:
    kind: str = "mean"  # "mean" | "cvar"
    tail_fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mean", "cvar"):
            raise ValueError(f"unknown risk measure {self.kind!r}")
        if self.kind == "cvar" and not (0.0 < self.tail_fraction <= 1.0):
            raise ValueError("CVaR tail_fraction must be in (0, 1]")

    @classmethod
    def mean(cls) -> "RiskMeasure":
        return cls("mean")

    @classmethod
    def cvar(cls, tail_fraction: float) -> "RiskMeasure":
        return cls("cvar", float(tail_fraction))

    def __str__(self) -> str:
        return "mean" if self.kind == "mean" else f"cvar({self.tail_fraction:g})"


@dataclass(frozen=True)
class InferenceTaskBinding:
    """``evaluate(d_hat, batch, seed) -> float`` must be deterministic in its inputs."""

    task_id: str
    evaluate: Callable[[SyntheticDataset, Any, int], float]
    meta: dict = field(default_factory=dict, compare=False)


class BatchEvaluationError(RuntimeError):
    def __init__(self, batch_index: int, cause: BaseException):
        super().__init__(f"evaluation failed on batch {batch_index}: {cause}")
        self.batch_index = batch_index


def risk_aggregate(measure: RiskMeasure, losses: Sequence[float]) -> float:
    arr = np.asarray(losses, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("no samples")
    if not np.all(np.isfinite(arr)):
        raise ValueError("invalid loss")
    if measure.kind == "mean":
        return float(arr.mean())
    n = arr.size
    k = math.ceil(measure.tail_fraction * n - 1e-12)
    k = min(max(k, 1), n)
    if k == n:
        # same summation order as the mean, so the two agree bit for bit
        return float(arr.mean())
    # stable sort on the negated losses: ties keep original index order
    worst = arr[np.argsort(-arr, kind="stable")[:k]]
    return float(worst.mean())


def empirical_risk(
    binding: InferenceTaskBinding,
    d_hat: SyntheticDataset,
    eval_batches: Sequence[Any],
    measure: RiskMeasure,
    seed: int,
) -> float:
    """Sample-average approximation of the distillation objective.

    Batch ``i`` is evaluated with seed ``derive_seed(seed, i)`` so batches
    can be farmed out in any order without changing the result.
    """
    if len(eval_batches) == 0:
        raise ValueError("empirical_risk needs at least one evaluation batch")
    losses = []
    for i, batch in enumerate(eval_batches):
        try:
            losses.append(float(binding.evaluate(d_hat, batch, derive_seed(seed, i))))
        except Exception as exc:
            raise BatchEvaluationError(i, exc) from exc
    return risk_aggregate(measure, losses)


def distribution_match_objective(
    d_hat: SyntheticDataset | np.ndarray, train: np.ndarray
) -> tuple[float, np.ndarray]:
    """Squared distance between row means, with its exact gradient in ``d_hat``."""
    x = d_hat.values if isinstance(d_hat, SyntheticDataset) else np.asarray(d_hat, float)
    train = np.asarray(train, dtype=float)
    if x.ndim != 2 or train.ndim != 2 or x.shape[1] != train.shape[1]:
        raise ValueError(
            f"column mismatch: synthetic {x.shape} vs train {train.shape}"
        )
    diff = x.mean(axis=0) - train.mean(axis=0)
    value = float(diff @ diff)
    grad = np.broadcast_to(2.0 / x.shape[0] * diff, x.shape).copy()
    return value, grad


def sample_subset_baseline(
    train: np.ndarray,
    ipc: int,
    seed: int,
    schema: Sequence[Column] | None = None,
) -> SyntheticDataset:
    """Uniform sample of ``ipc`` training rows, without replacement."""
    train = np.asarray(train, dtype=float)
    if ipc < 1 or ipc > train.shape[0]:
        raise ValueError(f"cannot sample ipc={ipc} rows from {train.shape[0]} training rows")
    rng = np.random.default_rng(seed)
    idx = rng.choice(train.shape[0], size=ipc, replace=False)
    if schema is None:
        schema = [Column(f"x{j}", DBN_VARIABLE) for j in range(train.shape[1])]
    return SyntheticDataset(train[idx], tuple(schema))
