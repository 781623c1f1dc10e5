"""BIC hill climbing and least-squares fitting for linear-Gaussian DBNs.

Everything works from second-moment ("Gram") matrices of ``[1, x]`` so the
same code fits complete data and the expected statistics of an EM step.
Two views exist: the initial slice (columns of slice 0) and the pooled
transition view (slice t-1 next to slice t, stacked over t >= 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from distilled.gdbn.model import NOISE_FLOOR, DbnStructure, GaussianDbn

RIDGE = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Moments:
    """Gram matrices of ``[1, x]`` for the initial and transition views."""

    n_vars: int
    n_slices: int
    g_init: np.ndarray
    n_init: float
    g_trans: np.ndarray | None
    n_trans: float

    def view(self, j: int) -> tuple[np.ndarray, float]:
        """Gram matrix and row count whose index ``1 + j`` is template node ``j``."""
        if j < self.n_vars:
            return self.g_init, self.n_init
        return self.g_trans, self.n_trans

    @classmethod
    def from_second_moment(cls, S: np.ndarray, n_rows: float, n_vars: int, n_slices: int):
        """Split a full ``[1, x]`` second-moment matrix into the two views."""
        n = n_vars
        idx0 = [0] + list(range(1, n + 1))
        g_init = S[np.ix_(idx0, idx0)]
        g_trans = None
        if n_slices >= 2:
            g_trans = np.zeros((2 * n + 1, 2 * n + 1))
            for t in range(1, n_slices):
                idx = [0] + list(range(1 + (t - 1) * n, 1 + (t + 1) * n))
                g_trans += S[np.ix_(idx, idx)]
        return cls(n, n_slices, g_init, float(n_rows), g_trans, float(n_rows) * (n_slices - 1))

    @classmethod
    def from_data(cls, data: np.ndarray, n_vars: int, n_slices: int) -> "Moments":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != n_vars * n_slices:
            raise ValueError(f"data must have n_vars * n_slices = {n_vars * n_slices} columns")
        if np.isnan(data).any():
            raise ValueError("masked entries present: impute first")
        Z = np.hstack([np.ones((data.shape[0], 1)), data])
        return cls.from_second_moment(Z.T @ Z, data.shape[0], n_vars, n_slices)


def _solve(G_pp: np.ndarray, G_py: np.ndarray) -> tuple[np.ndarray, bool]:
    """Batched normal equations with a ridge fallback for singular systems."""
    k = G_pp.shape[-1]
    eye = np.eye(k)
    try:
        beta = np.linalg.solve(G_pp, G_py[..., None])[..., 0]
        ok = np.all(np.isfinite(beta), axis=-1)
        cond_bad = np.linalg.cond(G_pp) > 1e12
        if np.all(ok) and not np.any(cond_bad):
            return beta, False
    except np.linalg.LinAlgError:
        pass
    beta = np.linalg.solve(G_pp + RIDGE * eye, G_py[..., None])[..., 0]
    return beta, True


def _family_rss(G: np.ndarray, y: int, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Regress Gram index ``y`` on Gram indices ``cols`` (batched over the leading axis).

    ``cols`` has shape (batch, k) and always includes the intercept index 0.
    """
    G_pp = G[cols[:, :, None], cols[:, None, :]]
    G_py = G[cols, y]
    beta, ridged = _solve(G_pp, G_py)
    rss = G[y, y] - 2.0 * np.einsum("bk,bk->b", beta, G_py) + np.einsum(
        "bk,bkl,bl->b", beta, G_pp, beta
    )
    return beta, np.maximum(rss, 0.0), ridged


def _loglik_from_rss(rss: np.ndarray, n: float) -> tuple[np.ndarray, np.ndarray]:
    var = np.maximum(rss / n, NOISE_FLOOR**2)
    ll = -0.5 * n * (_LOG_2PI + np.log(var)) - 0.5 * rss / var
    return ll, np.sqrt(var)


def bic_scores(G: np.ndarray, n: float, y: int, parent_sets: np.ndarray) -> np.ndarray:
    """BIC of node ``y`` for each row of ``parent_sets`` (Gram indices, no intercept)."""
    cols = np.hstack([np.zeros((parent_sets.shape[0], 1), dtype=int), parent_sets])
    _, rss, _ = _family_rss(G, y, cols)
    ll, _ = _loglik_from_rss(rss, n)
    k = parent_sets.shape[1] + 2
    return ll - 0.5 * k * math.log(n)


def _admissible(j: int, n: int) -> list[int]:
    if j < n:
        return [p for p in range(n) if p != j]
    return [p for p in range(2 * n) if p != j]


def _reaches(parents: list[set[int]], src: int, dst: int) -> bool:
    """True if a directed path src -> ... -> dst exists (edges parent -> child)."""
    children: dict[int, list[int]] = {}
    for c, ps in enumerate(parents):
        for p in ps:
            children.setdefault(p, []).append(c)
    stack, seen = [src], {src}
    while stack:
        u = stack.pop()
        if u == dst:
            return True
        for c in children.get(u, ()):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def learn_structure(
    data: np.ndarray, n_vars: int, n_slices: int, max_parents: int = 3
) -> DbnStructure:
    """Greedy BIC hill climbing over single-edge additions and removals.

    Moves are ranked by score gain; among equal gains the first in
    lexicographic (child, parent) order wins, and the search stops as soon
    as no move strictly improves the score.
    """
    data = np.asarray(data, dtype=float)
    if np.isnan(data).any():
        raise ValueError("masked entries present: impute first")
    if data.shape[0] < 2:
        raise ValueError("learn_structure needs at least 2 rows")
    mom = Moments.from_data(data, n_vars, n_slices)
    n = n_vars
    n_template = n * min(n_slices, 2)
    parents: list[set[int]] = [set() for _ in range(n_template)]
    current = np.empty(n_template)
    for j in range(n_template):
        G, cnt = mom.view(j)
        current[j] = bic_scores(G, cnt, 1 + j, np.zeros((1, 0), dtype=int))[0]

    def moves_for(j: int) -> list[tuple[float, int, int, bool]]:
        G, cnt = mom.view(j)
        cap = min(max_parents, int(cnt) - 2)
        ps = sorted(parents[j])
        out = []
        adds = [p for p in _admissible(j, n) if p not in parents[j]] if len(ps) < cap else []
        if adds:
            sets = np.array([sorted(ps + [p]) for p in adds], dtype=int) + 1
            gains = bic_scores(G, cnt, 1 + j, sets) - current[j]
            out += [(float(g), j, p, True) for g, p in zip(gains, adds)]
        if ps:
            sets = np.array([[q for q in ps if q != p] for p in ps], dtype=int).reshape(
                len(ps), len(ps) - 1
            ) + 1
            gains = bic_scores(G, cnt, 1 + j, sets) - current[j]
            out += [(float(g), j, p, False) for g, p in zip(gains, ps)]
        return out

    if max_parents <= 0:
        return DbnStructure(n_vars, n_slices, [() for _ in range(n_template)])
    cache = {j: moves_for(j) for j in range(n_template)}
    while True:
        cands = sorted(
            (m for j in range(n_template) for m in cache[j] if m[0] > 1e-9),
            key=lambda m: (-m[0], m[1], m[2]),
        )
        chosen = None
        for gain, j, p, add in cands:
            if add and _same_slice(j, p, n) and _reaches(parents, j, p):
                continue
            chosen = (gain, j, p, add)
            break
        if chosen is None:
            break
        gain, j, p, add = chosen
        if add:
            parents[j].add(p)
        else:
            parents[j].discard(p)
        current[j] += gain
        cache[j] = moves_for(j)
    return DbnStructure(n_vars, n_slices, [tuple(sorted(ps)) for ps in parents])


def _same_slice(j: int, p: int, n: int) -> bool:
    return (j < n) == (p < n)


def fit_from_moments(structure: DbnStructure, mom: Moments) -> GaussianDbn:
    weights, intercept, noise = [], [], []
    ridged_nodes = []
    for j, ps in enumerate(structure.parents):
        G, cnt = mom.view(j)
        cols = np.array([[0] + [1 + p for p in ps]], dtype=int)
        beta, rss, ridged = _family_rss(G, 1 + j, cols)
        _, sd = _loglik_from_rss(rss, cnt)
        intercept.append(beta[0, 0])
        weights.append(beta[0, 1:])
        noise.append(sd[0])
        if ridged:
            ridged_nodes.append(j)
    meta = {"ridge_fallback": ridged_nodes} if ridged_nodes else {}
    return GaussianDbn(structure, weights, np.array(intercept), np.array(noise), meta)


def fit_parameters(data: np.ndarray, structure: DbnStructure) -> GaussianDbn:
    """Per-node OLS with intercept; ML residual std floored at 1e-3."""
    data = np.asarray(data, dtype=float)
    max_k = max((len(ps) for ps in structure.parents), default=0)
    if data.shape[0] <= max_k + 1:
        raise ValueError(f"need more than {max_k + 1} rows to fit, got {data.shape[0]}")
    mom = Moments.from_data(data, structure.n_vars, structure.n_slices)
    return fit_from_moments(structure, mom)
