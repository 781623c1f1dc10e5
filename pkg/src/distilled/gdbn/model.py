"""Linear-Gaussian dynamic Bayesian networks over a 2-slice template.

Template node ids: ``j = s * n_vars + v`` with ``s`` in {0, 1}. Slice 0
holds the initial network, slice 1 the transition network that is
unrolled for every later time slice. A parent id ``p < n_vars`` of a
slice-1 node lives in the previous slice, ``p >= n_vars`` in the same one.
Data columns follow ``c = t * n_vars + v`` and are named ``v{v}_t{t}``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NOISE_FLOOR = 1e-3
_LOG_2PI = math.log(2.0 * math.pi)


def column_names(n_vars: int, n_slices: int) -> list[str]:
    return [f"v{v}_t{t}" for t in range(n_slices) for v in range(n_vars)]


@dataclass(frozen=True)
class DbnStructure:
    n_vars: int
    n_slices: int
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        parents = tuple(tuple(sorted(int(p) for p in ps)) for ps in self.parents)
        object.__setattr__(self, "parents", parents)
        if len(parents) != self.n_template:
            raise ValueError(f"expected {self.n_template} parent sets, got {len(parents)}")
        n = self.n_vars
        for j, ps in enumerate(parents):
            lo, hi = (0, n) if j < n else (0, 2 * n)
            for p in ps:
                if not lo <= p < hi or p == j:
                    raise ValueError(f"inadmissible parent {p} for template node {j}")
        for s in range(self.n_template // n):
            if intra_order(self, s) is None:
                raise ValueError(f"slice {s} template contains a cycle")

    @property
    def n_template(self) -> int:
        return self.n_vars * min(self.n_slices, 2)

    @property
    def n_nodes(self) -> int:
        return self.n_vars * self.n_slices

    def template_of(self, col: int) -> int:
        t, v = divmod(col, self.n_vars)
        return v if t == 0 else self.n_vars + v

    def unrolled_parents(self, col: int) -> list[int]:
        n = self.n_vars
        t, v = divmod(col, n)
        if t == 0:
            return list(self.parents[v])
        base = (t - 1) * n
        return [base + p for p in self.parents[n + v]]

    def n_edges(self) -> int:
        return sum(len(ps) for ps in self.parents)


def intra_order(structure: DbnStructure, s: int) -> list[int] | None:
    """Topological order of template slice ``s`` via same-slice edges, or None if cyclic."""
    n = structure.n_vars
    nodes = list(range(s * n, (s + 1) * n))
    indeg = {j: 0 for j in nodes}
    children: dict[int, list[int]] = {j: [] for j in nodes}
    for j in nodes:
        for p in structure.parents[j]:
            if s * n <= p < (s + 1) * n:
                indeg[j] += 1
                children[p].append(j)
    ready = [j for j in nodes if indeg[j] == 0]
    order = []
    while ready:
        j = ready.pop(0)
        order.append(j)
        for c in children[j]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return order if len(order) == len(nodes) else None


@dataclass(frozen=True, eq=False)
class GaussianDbn:
    structure: DbnStructure
    weights: tuple[np.ndarray, ...]
    intercept: np.ndarray
    noise_std: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        st = self.structure
        weights = tuple(np.asarray(w, dtype=float).reshape(-1) for w in self.weights)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "intercept", np.asarray(self.intercept, dtype=float))
        object.__setattr__(self, "noise_std", np.asarray(self.noise_std, dtype=float))
        if len(weights) != st.n_template:
            raise ValueError("one weight vector per template node required")
        for j, (w, ps) in enumerate(zip(weights, st.parents)):
            if w.shape != (len(ps),):
                raise ValueError(f"node {j}: {len(ps)} parents but weights of shape {w.shape}")
        if self.intercept.shape != (st.n_template,) or self.noise_std.shape != (st.n_template,):
            raise ValueError("intercept/noise_std must have one entry per template node")
        if not np.all(self.noise_std > 0):
            raise ValueError("noise_std must be positive")

    @property
    def n_vars(self) -> int:
        return self.structure.n_vars

    @property
    def n_slices(self) -> int:
        return self.structure.n_slices

    @property
    def parents(self) -> tuple[tuple[int, ...], ...]:
        return self.structure.parents

    def unrolled(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficient matrix B (x = B x + c + e), intercepts c and noise stds."""
        st = self.structure
        n_nodes = st.n_nodes
        B = np.zeros((n_nodes, n_nodes))
        c = np.empty(n_nodes)
        sd = np.empty(n_nodes)
        for col in range(n_nodes):
            j = st.template_of(col)
            ps = st.unrolled_parents(col)
            if ps:
                B[col, ps] = self.weights[j]
            c[col] = self.intercept[j]
            sd[col] = self.noise_std[j]
        return B, c, sd

    def joint_gaussian(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of the unrolled network."""
        B, c, sd = self.unrolled()
        A = np.linalg.inv(np.eye(len(c)) - B)
        mu = A @ c
        cov = (A * sd**2) @ A.T
        return mu, 0.5 * (cov + cov.T)

    def with_params(self, weights, intercept, noise_std, meta=None) -> "GaussianDbn":
        return GaussianDbn(self.structure, weights, intercept, noise_std, meta or {})

    def to_dict(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "n_slices": self.n_slices,
            "parents": [list(ps) for ps in self.parents],
            "weights": [w.tolist() for w in self.weights],
            "intercept": self.intercept.tolist(),
            "noise_std": self.noise_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianDbn":
        st = DbnStructure(d["n_vars"], d["n_slices"], d["parents"])
        return cls(st, d["weights"], d["intercept"], d["noise_std"])


def random_gdbn(
    n_vars: int,
    n_slices: int,
    edge_prob: float = 0.15,
    seed: int = 0,
    max_parents: int = 3,
) -> GaussianDbn:
    """Random network: each admissible template edge kept with ``edge_prob``.

    Intra-slice edges follow a random variable order and are shared by both
    template slices; slice-1 nodes also draw lag-1 parents. Every node has
    noise std 0.5 and intercept 0, weights are Uniform(+-[0.1, 1]).
    """
    if n_vars < 1 or n_slices < 2:
        raise ValueError("random_gdbn needs n_vars >= 1 and n_slices >= 2")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must be in [0, 1]")
    rng = np.random.default_rng(seed)
    n = n_vars
    order = rng.permutation(n)
    pos = np.empty(n, dtype=int)
    pos[order] = np.arange(n)
    parents: list[list[int]] = [[] for _ in range(2 * n)]
    for v in range(n):
        intra = [n + u for u in range(n) if pos[u] < pos[v]]
        inter = list(range(n))
        cands = intra + inter
        for idx in rng.permutation(len(cands)):
            if len(parents[n + v]) >= max_parents:
                break
            if rng.random() < edge_prob:
                parents[n + v].append(cands[idx])
        parents[v] = [p - n for p in parents[n + v] if p >= n]
    st = DbnStructure(n, n_slices, parents)
    weights = []
    for ps in st.parents:
        mag = rng.uniform(0.1, 1.0, size=len(ps))
        sign = rng.choice([-1.0, 1.0], size=len(ps))
        weights.append(mag * sign)
    return GaussianDbn(st, weights, np.zeros(2 * n), np.full(2 * n, 0.5))


def sample_gdbn(dbn: GaussianDbn, n_obs: int, seed: int) -> np.ndarray:
    """Ancestral sampling, slice by slice in topological order."""
    if n_obs < 0:
        raise ValueError("n_obs must be >= 0")
    st = dbn.structure
    n = st.n_vars
    rng = np.random.default_rng(seed)
    out = np.zeros((n_obs, st.n_nodes))
    orders = [intra_order(st, s) for s in range(st.n_template // n)]
    for t in range(st.n_slices):
        s = min(t, 1)
        for j in orders[s]:
            col = t * n + (j - s * n)
            ps = st.unrolled_parents(col)
            mean = dbn.intercept[j] + (out[:, ps] @ dbn.weights[j] if ps else 0.0)
            out[:, col] = mean + dbn.noise_std[j] * rng.standard_normal(n_obs)
    return out


def node_log_density(dbn: GaussianDbn, data: np.ndarray) -> np.ndarray:
    """Per-row, per-node Gaussian log-density of each value given its parents."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != dbn.structure.n_nodes:
        raise ValueError(f"data must have {dbn.structure.n_nodes} columns")
    if np.isnan(data).any():
        raise ValueError("log_likelihood needs complete data (masked entries present)")
    B, c, sd = dbn.unrolled()
    resid = data - data @ B.T - c
    return -0.5 * (_LOG_2PI + 2.0 * np.log(sd)) - 0.5 * (resid / sd) ** 2


def log_likelihood(dbn: GaussianDbn, data: np.ndarray) -> float:
    return float(node_log_density(dbn, data).sum())


def save_dbn(dbn: GaussianDbn, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dbn.to_dict(), indent=2) + "\n")


def load_dbn(path: str | Path) -> GaussianDbn:
    return GaussianDbn.from_dict(json.loads(Path(path).read_text()))


def write_matrix_csv(path: str | Path, data: np.ndarray, names: list[str]) -> None:
    """CSV with a header row; NaN entries are written as empty cells."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in np.asarray(data, dtype=float):
            w.writerow(["" if np.isnan(x) else repr(float(x)) for x in row])


def read_matrix_csv(path: str | Path) -> tuple[np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names, body = rows[0], rows[1:]
    data = np.array(
        [[float(x) if x != "" else np.nan for x in row] for row in body], dtype=float
    ).reshape(len(body), len(names))
    return data, names
