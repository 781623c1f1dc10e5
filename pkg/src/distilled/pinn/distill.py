"""Distilling a small labelled point set that trains a boundary-generalizable PINN."""

from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from distilled.core import (
    BOUNDARY_POINT,
    COORDINATE,
    INTERIOR_POINT,
    LABEL,
    Column,
    RiskMeasure,
    SyntheticDataset,
    risk_aggregate,
)
from distilled.dfo import DfoConfig, dfo_search
from distilled.pinn.physics import PinnDataset, TrainConfig, _loss_parts, train_with
from distilled.seeding import derive_seed

PINN_SCHEMA = (Column("r", COORDINATE), Column("theta", COORDINATE), Column("y", LABEL))
GAUSSIAN_NOISE = "gaussian-noise"
SUBSAMPLE_TRAIN = "subsample-train"
TWO_PI = 2.0 * math.pi


def n_boundary_rows(ipc: int) -> int:
    return max(1, math.ceil(ipc / 10))


def to_pinn_dataset(d_hat: SyntheticDataset) -> PinnDataset:
    """Interpret D-hat in the offset-free frame (alpha = 0).

    Radii are clipped to [0, 1] and angles wrapped to [0, 2 pi); boundary
    rows ignore their r entry.
    """
    roles = d_hat.row_roles or (INTERIOR_POINT,) * d_hat.ipc
    v = d_hat.values
    is_b = np.array([role == BOUNDARY_POINT for role in roles])
    interior = v[~is_b].copy()
    interior[:, 0] = np.clip(interior[:, 0], 0.0, 1.0)
    interior[:, 1] = np.mod(interior[:, 1], TWO_PI)
    boundary = np.column_stack([np.mod(v[is_b, 1], TWO_PI), v[is_b, 2]])
    return PinnDataset(interior, boundary, 0.0)


def pooled_rows(bcs: Sequence[PinnDataset]) -> tuple[np.ndarray, np.ndarray]:
    """Interior and boundary rows of every dataset as (r, theta, y - alpha)."""
    interior, boundary = [], []
    for bc in bcs:
        i = bc.interior.copy()
        i[:, 2] -= bc.alpha
        interior.append(i)
        b = np.column_stack([np.ones(bc.boundary.shape[0]), bc.boundary[:, 0],
                             bc.boundary[:, 1] - bc.alpha])
        boundary.append(b)
    return np.vstack(interior), np.vstack(boundary)


def _role_layout(ipc: int) -> tuple[str, ...]:
    nb = n_boundary_rows(ipc)
    return (INTERIOR_POINT,) * (ipc - nb) + (BOUNDARY_POINT,) * nb


def subsample_dataset(bcs: Sequence[PinnDataset], ipc: int, seed: int) -> SyntheticDataset:
    """``ipc`` rows drawn from the pooled data, about a tenth of them boundary rows."""
    if ipc < 4:
        raise ValueError("ipc must be >= 4")
    interior, boundary = pooled_rows(bcs)
    roles = _role_layout(ipc)
    nb = roles.count(BOUNDARY_POINT)
    rng = np.random.default_rng(seed)
    if nb > boundary.shape[0] or ipc - nb > interior.shape[0]:
        raise ValueError("not enough training points for the requested ipc")
    rows = np.vstack([
        interior[rng.choice(interior.shape[0], ipc - nb, replace=False)],
        boundary[rng.choice(boundary.shape[0], nb, replace=False)],
    ])
    return SyntheticDataset(rows, PINN_SCHEMA, roles)


def outer_objective(
    d_hat: SyntheticDataset,
    train_bcs: Sequence[PinnDataset],
    risk: RiskMeasure,
    train_cfg: TrainConfig,
    residual_weight: float | None = None,
) -> float:
    """Train once on D-hat, then aggregate the loss on every training boundary condition.

    ``residual_weight`` weights the PDE term of the evaluation loss; by
    default it is the one used in training. Zero scores reconstruction only.
    """
    net = train_with(to_pinn_dataset(d_hat), train_cfg)
    w = train_cfg.residual_weight if residual_weight is None else residual_weight
    return risk_aggregate(risk, bc_losses(net, train_bcs, w))


def bc_losses(net, bcs: Sequence[PinnDataset], residual_weight: float = 1.0) -> list[float]:
    # boundary conditions generated on one lattice share the network jets
    losses, cache = [], None
    for bc in bcs:
        r, th, _ = bc.points()
        if cache is None or not (np.array_equal(cache[0], r) and np.array_equal(cache[1], th)):
            cache = (r, th, net.jets(r, th))
        losses.append(_cached_loss(cache[2], bc, residual_weight))
    return losses


def _cached_loss(jets, bc: PinnDataset, residual_weight: float) -> float:
    pred, res, _, _ = _loss_parts(None, bc, residual_weight, jets)
    return pred + residual_weight * res


def l2_test_error(net, test_bcs: Sequence[PinnDataset]) -> float:
    """Relative L2 error per boundary condition, averaged."""
    if len(test_bcs) == 0:
        raise ValueError("no test datasets")
    errs = []
    for bc in test_bcs:
        r, th, y = bc.points()
        pred = bc.alpha + net(r, th)
        num = float(np.sum((pred - y) ** 2))
        den = float(np.sum(y**2))
        if den == 0.0:
            warnings.warn("all-zero reference: reporting absolute L2 error", RuntimeWarning)
            errs.append(math.sqrt(num))
        else:
            errs.append(math.sqrt(num / den))
    return float(np.mean(errs))


def _standardizer(train_bcs: Sequence[PinnDataset]) -> tuple[np.ndarray, np.ndarray]:
    interior, boundary = pooled_rows(train_bcs)
    allrows = np.vstack([interior, boundary])
    mu = allrows.mean(axis=0)
    sd = allrows.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def distill_pinn(
    train_bcs: Sequence[PinnDataset],
    ipc: int,
    dfo_cfg: DfoConfig,
    init_mode: str,
    seed: int,
    *,
    train_cfg: TrainConfig = TrainConfig(),
    risk: RiskMeasure = RiskMeasure.cvar(0.2),
    test_bcs: Sequence[PinnDataset] | None = None,
    checkpoints: Sequence[int] = (),
    outer_residual_weight: float | None = None,
) -> tuple[SyntheticDataset, dict]:
    """Search D-hat with the (1+1)-ES in train-standardized coordinates.

    ``checkpoints`` lists smaller budgets whose incumbents are reported as
    well; the search stream does not depend on the budget, so each
    checkpoint equals a standalone run with that budget.
    """
    if ipc < 4:
        raise ValueError("ipc must be >= 4")
    mu, sd = _standardizer(train_bcs)
    if init_mode == SUBSAMPLE_TRAIN:
        d0 = subsample_dataset(train_bcs, ipc, derive_seed(seed, "init"))
    elif init_mode == GAUSSIAN_NOISE:
        z = np.random.default_rng(derive_seed(seed, "init")).standard_normal((ipc, 3))
        d0 = SyntheticDataset(mu + sd * z, PINN_SCHEMA, _role_layout(ipc))
    else:
        raise ValueError(f"unknown init_mode {init_mode!r}")
    z0 = d0.with_values((d0.values - mu) / sd)

    def destd(z: SyntheticDataset) -> SyntheticDataset:
        return z.with_values(mu + sd * z.values)

    def loss(z: SyntheticDataset) -> float:
        return outer_objective(destd(z), train_bcs, risk, train_cfg, outer_residual_weight)

    budgets = sorted({b for b in checkpoints if 1 <= b < dfo_cfg.budget} | {dfo_cfg.budget})
    snaps: dict[int, tuple[SyntheticDataset, float]] = {}

    def on_eval(n_evals: int, incumbent: SyntheticDataset, best: float) -> None:
        if n_evals - 1 in budgets:
            snaps[n_evals - 1] = (incumbent, best)

    best_z, best_loss, trace = dfo_search(loss, z0, dfo_cfg, derive_seed(seed, "dfo"), on_eval)
    report = {
        "ipc": ipc,
        "init_mode": init_mode,
        "risk": str(risk),
        "initial_loss": trace[0][1],
        "best_loss": {b: snaps[b][1] for b in budgets},
        "trace": trace,
        "datasets": {b: destd(snaps[b][0]) for b in budgets},
    }
    if test_bcs is not None:
        report["test_l2"] = {
            b: l2_test_error(train_with(to_pinn_dataset(report["datasets"][b]), train_cfg), test_bcs)
            for b in budgets
        }
        report["final_test_l2"] = report["test_l2"][dfo_cfg.budget]
    return destd(best_z), report


def pooled_dataset(bcs: Sequence[PinnDataset]) -> SyntheticDataset:
    """Every labelled point of ``bcs`` as one D-hat, in the offset-free frame."""
    interior, boundary = pooled_rows(bcs)
    roles = (INTERIOR_POINT,) * interior.shape[0] + (BOUNDARY_POINT,) * boundary.shape[0]
    return SyntheticDataset(np.vstack([interior, boundary]), PINN_SCHEMA, roles)


def write_pinn_csv(path: str | Path, data: SyntheticDataset | PinnDataset) -> None:
    """Rows as ``role,r,theta,y``; a PinnDataset is written with alpha removed."""
    if isinstance(data, PinnDataset):
        data = pooled_dataset([data])
    roles = data.row_roles or (INTERIOR_POINT,) * data.ipc
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["role", "r", "theta", "y"])
        for role, row in zip(roles, data.values):
            w.writerow([role, *(repr(float(x)) for x in row)])


def read_pinn_csv(path: str | Path) -> SyntheticDataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    roles = tuple(r[0] for r in rows)
    values = np.array([[float(x) for x in r[1:]] for r in rows])
    return SyntheticDataset(values, PINN_SCHEMA, roles)
