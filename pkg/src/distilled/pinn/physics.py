"""Laplace equation on the unit disk, in polar coordinates.

A boundary condition is ``y(1, theta) = cos(theta) + alpha``; the solution is
``r cos(theta) + alpha``. The network is trained in the offset-free frame:
for a dataset with offset ``alpha`` the prediction is ``alpha + net(r, theta)``.
A constant is harmonic, so the lift leaves the PDE residual untouched, and a
single network can serve every boundary condition of the family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from distilled.pinn.mlp import Jets, Mlp, AdamState, adam_step, backward_jets, forward_jets
from distilled.seeding import derive_seed

TRAIN_LOWER = "train-lower"
TEST_UPPER = "test-upper"


@dataclass(frozen=True)
class SecondOrderEval:
    value: float
    grad: tuple[float, float]  # (dy/dr, dy/dtheta)
    second: tuple[float, float]  # (d2y/dr2, d2y/dtheta2)


def second_order_eval(net, r: float, theta: float) -> SecondOrderEval:
    j = net.jets(np.array([r]), np.array([theta]))
    return SecondOrderEval(
        float(j.value[0]),
        (float(j.d1[0, 0]), float(j.d1[1, 0])),
        (float(j.d2[0, 0]), float(j.d2[1, 0])),
    )


def laplace_residual(ev: SecondOrderEval | Jets, r):
    """``r y_r + r^2 y_rr + y_thetatheta``: zero for harmonic functions."""
    if isinstance(ev, Jets):
        return r * ev.d1[0] + r * r * ev.d2[0] + ev.d2[1]
    return r * ev.grad[0] + r * r * ev.second[0] + ev.second[1]


@dataclass(frozen=True)
class AnalyticSolution:
    """``r cos(theta) + offset`` with exact jets; stands in for a network."""

    offset: float = 0.0

    def jets(self, r, theta) -> Jets:
        r = np.asarray(r, dtype=float).ravel()
        theta = np.asarray(theta, dtype=float).ravel()
        c, s = np.cos(theta), np.sin(theta)
        return Jets(
            r * c + self.offset,
            np.stack([c, -r * s]),
            np.stack([np.zeros_like(r), -r * c]),
        )

    def __call__(self, r, theta):
        return self.jets(r, theta).value


@dataclass(frozen=True, eq=False)
class PinnDataset:
    """Labelled points of one boundary condition.

    ``interior`` rows are (r, theta, y); ``boundary`` rows are (theta, g) at r = 1.
    """

    interior: np.ndarray
    boundary: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        interior = np.asarray(self.interior, dtype=float).reshape(-1, 3)
        boundary = np.asarray(self.boundary, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "boundary", boundary)
        if interior.size and (interior[:, 0].min() < 0 or interior[:, 0].max() > 1):
            raise ValueError("interior radii must lie in [0, 1]")

    @property
    def n_points(self) -> int:
        return self.interior.shape[0] + self.boundary.shape[0]

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(r, theta, y) over interior then boundary points."""
        r = np.concatenate([self.interior[:, 0], np.ones(self.boundary.shape[0])])
        th = np.concatenate([self.interior[:, 1], self.boundary[:, 0]])
        y = np.concatenate([self.interior[:, 2], self.boundary[:, 1]])
        return r, th, y


@dataclass(frozen=True)
class BoundaryPrior:
    tail_quantile_a: float = 0.4
    side: str = TRAIN_LOWER

    def __post_init__(self):
        if not 0.0 < self.tail_quantile_a <= 0.5:
            raise ValueError("tail quantile a must be in (0, 0.5]")
        if self.side not in (TRAIN_LOWER, TEST_UPPER):
            raise ValueError(f"unknown side {self.side!r}")

    def bounds(self) -> tuple[float, float]:
        a = self.tail_quantile_a
        if self.side == TRAIN_LOWER:
            return -math.inf, NormalDist().inv_cdf(a)
        return NormalDist().inv_cdf(1.0 - a), math.inf

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.bounds()
        out = []
        while len(out) < n:
            x = rng.standard_normal(max(2 * (n - len(out)), 16))
            out.extend(x[(x > lo) & (x < hi)].tolist())
        return np.array(out[:n])


def polar_lattice(n_interior: int, n_boundary: int) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced (r, theta) grid: origin plus equally spaced rings.

    Rings share the boundary's angular spacing. When the full grid has more
    points than requested, an evenly strided subset is kept.
    """
    if n_interior < 1:
        raise ValueError("n_interior must be >= 1")
    n_theta = n_boundary if n_boundary > 0 else max(1, math.ceil(math.sqrt(n_interior)))
    rings = max(1, math.ceil((n_interior - 1) / n_theta))
    radii = np.arange(1, rings + 1) / (rings + 1)
    thetas = 2.0 * math.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(radii, thetas, indexing="ij")
    r = np.concatenate([[0.0], rr.ravel()])
    th = np.concatenate([[0.0], tt.ravel()])
    if r.size > n_interior:
        keep = np.round(np.linspace(0, r.size - 1, n_interior)).astype(int)
        r, th = r[keep], th[keep]
    boundary = 2.0 * math.pi * np.arange(n_boundary) / max(n_boundary, 1)
    return np.stack([r, th], axis=1), boundary


def generate_pinn_data(
    prior: BoundaryPrior,
    n_bcs: int,
    n_interior: int,
    n_boundary: int,
    noise_std: float,
    lattice_seed: int,
) -> list[PinnDataset]:
    """One dataset per sampled offset; labels from the analytic solution plus noise."""
    rng_alpha = np.random.default_rng(derive_seed(lattice_seed, "alpha"))
    rng_noise = np.random.default_rng(derive_seed(lattice_seed, "noise"))
    alphas = prior.sample(n_bcs, rng_alpha)
    pts, bth = polar_lattice(n_interior, n_boundary)
    out = []
    for alpha in alphas:
        y = pts[:, 0] * np.cos(pts[:, 1]) + alpha
        g = np.cos(bth) + alpha
        if noise_std > 0:
            y = y + noise_std * rng_noise.standard_normal(y.shape)
            g = g + noise_std * rng_noise.standard_normal(g.shape)
        out.append(PinnDataset(np.column_stack([pts, y]), np.column_stack([bth, g]), float(alpha)))
    return out


def _loss_parts(model, data: PinnDataset, residual_weight: float, jets: Jets | None = None):
    r, th, y = data.points()
    if jets is None:
        jets = model.jets(r, th)
    n_int = data.interior.shape[0]
    err = data.alpha + jets.value - y
    pred = float(np.mean(err**2))
    if n_int and residual_weight:
        res = laplace_residual(Jets(jets.value[:n_int], jets.d1[:, :n_int], jets.d2[:, :n_int]),
                               r[:n_int])
        res_loss = float(np.mean(res**2))
    else:
        res = np.zeros(n_int)
        res_loss = 0.0
    return pred, res_loss, err, res


def pinn_loss(model, data: PinnDataset, residual_weight: float = 1.0) -> float:
    """Mean squared prediction error over all labelled points plus
    ``residual_weight`` times the mean squared PDE residual over interior points."""
    if data.n_points == 0:
        raise ValueError("empty dataset")
    pred, res_loss, _, _ = _loss_parts(model, data, residual_weight)
    return pred + residual_weight * res_loss


def pinn_loss_and_grad(net: Mlp, data: PinnDataset, residual_weight: float = 1.0):
    """Loss and its gradient with respect to ``net.params``."""
    if data.n_points == 0:
        raise ValueError("empty dataset")
    r, th, _ = data.points()
    jets, tape = forward_jets(net, r, th)
    pred, res_loss, err, res = _loss_parts(net, data, residual_weight, jets)
    n = err.size
    n_int = data.interior.shape[0]
    g0 = 2.0 * err / n
    g1 = np.zeros((2, n))
    g2 = np.zeros((2, n))
    if n_int and residual_weight:
        c = 2.0 * residual_weight * res / n_int
        ri = r[:n_int]
        g1[0, :n_int] = c * ri
        g2[0, :n_int] = c * ri * ri
        g2[1, :n_int] = c
    grads = backward_jets(net, tape, g0, g1, g2)
    return pred + residual_weight * res_loss, grads


class TrainingDivergence(ArithmeticError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"non-finite PINN loss {value} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    widths: tuple[int, ...] = (2, 32, 32, 32, 1)
    epochs: int = 1000
    lr: float = 1e-3
    residual_weight: float = 1.0
    net_seed: int = 0


def train_pinn(
    data: PinnDataset,
    net_init_seed: int = 0,
    epochs: int = 1000,
    lr: float = 1e-3,
    widths=(2, 32, 32, 32, 1),
    residual_weight: float = 1.0,
) -> Mlp:
    """Full-batch Adam on ``pinn_loss``."""
    if data.n_points == 0:
        raise ValueError("empty dataset")
    net = Mlp.init(tuple(widths), net_init_seed)
    state = AdamState.fresh(net.params)
    for epoch in range(epochs):
        # overflow shows up as a non-finite loss, checked below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = pinn_loss_and_grad(net, data, residual_weight)
        if not math.isfinite(loss):
            raise TrainingDivergence(epoch, loss)
        state = adam_step(state, grads, lr)
        net = net.with_params(state.params)
    return net


def train_with(data: PinnDataset, cfg: TrainConfig) -> Mlp:
    return train_pinn(data, cfg.net_seed, cfg.epochs, cfg.lr, cfg.widths, cfg.residual_weight)
