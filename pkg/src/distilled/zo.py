"""Zeroth-order outer loop: Gaussian-smoothing two-point gradients + SGD on D-hat."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from distilled.core import InferenceTaskBinding, SyntheticDataset
from distilled.seeding import derive_seed

LossFn = Callable[[SyntheticDataset], float]


@dataclass(frozen=True)
class InverseSqrt:
    c: float = 0.1

    def __call__(self, k: int) -> float:
        return self.c / math.sqrt(1.0 + k)


@dataclass(frozen=True)
class Constant:
    s: float = 4e-5

    def __call__(self, k: int) -> float:
        return self.s


@dataclass(frozen=True)
class StepDecay:
    s: float
    factor: float = 0.5
    every: int = 100

    def __call__(self, k: int) -> float:
        return self.s * self.factor ** (k // self.every)


Schedule = InverseSqrt | Constant | StepDecay


def stepsize(schedule: Schedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be >= 0")
    return float(schedule(k))


@dataclass(frozen=True)
class ZoConfig:
    m_perturbations: int = 10
    sigma: float = 1e-2
    iterations: int = 100
    schedule: Schedule = field(default_factory=lambda: InverseSqrt(0.1))

    def __post_init__(self):
        if self.m_perturbations < 1:
            raise ValueError("m_perturbations must be >= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


class NonFiniteLossError(ArithmeticError):
    def __init__(self, probe: int, value: float):
        where = "base point" if probe == 0 else f"probe {probe}"
        super().__init__(f"non-finite loss {value} at {where}")
        self.probe = probe


class DivergenceError(RuntimeError):
    def __init__(self, message: str, trace: list[tuple[int, float]]):
        super().__init__(message)
        self.trace = trace


def _two_point(
    loss: LossFn, d_hat: SyntheticDataset, cfg: ZoConfig, seed: int
) -> tuple[np.ndarray, float]:
    base = float(loss(d_hat))
    if not math.isfinite(base):
        raise NonFiniteLossError(0, base)
    x = d_hat.values
    grad = np.zeros_like(x)
    for l in range(1, cfg.m_perturbations + 1):
        # one independent stream per probe, so probes can be evaluated in any order
        v = np.random.default_rng(derive_seed(seed, l)).standard_normal(x.shape)
        val = float(loss(d_hat.with_values(x + cfg.sigma * v)))
        if not math.isfinite(val):
            raise NonFiniteLossError(l, val)
        grad += (val - base) / cfg.sigma * v
    return grad / cfg.m_perturbations, base


def two_point_gradient(
    loss: LossFn, d_hat: SyntheticDataset, cfg: ZoConfig, seed: int
) -> np.ndarray:
    """(1/M) sum_l [L(D + sigma v_l) - L(D)] / sigma * v_l with v_l ~ N(0, I).

    Makes exactly M + 1 calls to ``loss``.
    """
    return _two_point(loss, d_hat, cfg, seed)[0]


Sampler = Callable[[int, np.random.Generator], tuple[InferenceTaskBinding, Any]]


def zo_distill(
    loss_sampler: Sampler,
    d_init: SyntheticDataset,
    cfg: ZoConfig,
    seed: int,
    callback: Callable[[int, SyntheticDataset], None] | None = None,
) -> tuple[SyntheticDataset, list[tuple[int, float]]]:
    """Run the SGD-style distillation loop.

    Each iteration asks ``loss_sampler(k, rng)`` for a (task, batch) pair,
    estimates the gradient of that task's loss at the current D-hat and
    takes a step of size ``stepsize(cfg.schedule, k)``. ``callback(k, d)``
    sees the dataset before iteration k and once more after the last one.
    """
    rng = np.random.default_rng(derive_seed(seed, "sampler"))
    d = d_init
    trace: list[tuple[int, float]] = []
    threshold = None
    for k in range(cfg.iterations):
        if callback is not None:
            callback(k, d)
        binding, batch = loss_sampler(k, rng)
        eval_seed = derive_seed(seed, ("eval", k))

        def loss(dd: SyntheticDataset) -> float:
            return binding.evaluate(dd, batch, eval_seed)

        try:
            g, base = _two_point(loss, d, cfg, derive_seed(seed, ("probe", k)))
        except NonFiniteLossError as exc:
            raise DivergenceError(f"divergence at iteration {k}: {exc}", trace) from exc
        trace.append((k, base))
        if threshold is None:
            threshold = 1e6 * abs(base) if base != 0 else 1e6
        elif base > threshold:
            raise DivergenceError(
                f"divergence at iteration {k}: loss {base:.4g} exceeds 1e6 x initial", trace
            )
        new_values = d.values - stepsize(cfg.schedule, k) * g
        if not np.all(np.isfinite(new_values)):
            raise DivergenceError(f"divergence at iteration {k}: non-finite update", trace)
        d = d.with_values(new_values)
    if callback is not None:
        callback(cfg.iterations, d)
    return d, trace
