"""Categorical mixture-AR models over ternary multivariate series.

Joint states {0,1,2}^n are encoded lexicographically (feature 0 most
significant) into integers [0, 3^n). A model is a convex combination of
row-stochastic transition matrices; mixture weights come from the
count-weighted log-likelihood of each component under a uniform
Dirichlet prior.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from distilled.core import CATEGORICAL_STATE, Column, SyntheticDataset
from distilled.seeding import derive_seed

N_LEVELS = 3
LOG_EPS = 1e-12


def encode_state(x) -> int:
    x = np.asarray(x).ravel()
    if x.size == 0 or np.any((x != 0) & (x != 1) & (x != 2)):
        raise ValueError("state entries must lie in {0, 1, 2}")
    code = 0
    for v in x:
        code = code * N_LEVELS + int(v)
    return code


def decode_state(code: int, n: int) -> np.ndarray:
    if not 0 <= code < N_LEVELS**n:
        raise ValueError(f"code {code} outside [0, {N_LEVELS**n})")
    out = np.zeros(n, dtype=int)
    for i in range(n - 1, -1, -1):
        code, out[i] = divmod(code, N_LEVELS)
    return out


def _encode_rows(states: np.ndarray) -> np.ndarray:
    """Vectorized encoding along the last axis."""
    n = states.shape[-1]
    place = N_LEVELS ** np.arange(n - 1, -1, -1)
    return np.tensordot(states.astype(np.int64), place, axes=([-1], [0]))


@dataclass(frozen=True, eq=False)
class CategoricalSeries:
    """``observations[l, t]`` is the state vector of sequence l at time t."""

    observations: np.ndarray  # (N, T, n) integers

    def __post_init__(self):
        obs = np.asarray(self.observations)
        if obs.ndim != 3:
            raise ValueError("observations must have shape (N, T, n)")
        if not np.all(np.isin(obs, (0, 1, 2))):
            raise ValueError("state entries must lie in {0, 1, 2}")
        object.__setattr__(self, "observations", obs.astype(int))

    @property
    def n_sequences(self) -> int:
        return self.observations.shape[0]

    @property
    def length(self) -> int:
        return self.observations.shape[1]

    @property
    def n_features(self) -> int:
        return self.observations.shape[2]

    @property
    def n_states(self) -> int:
        return N_LEVELS**self.n_features

    def codes(self) -> np.ndarray:
        return _encode_rows(self.observations)

    def to_synthetic(self) -> SyntheticDataset:
        n, t = self.n_features, self.length
        values = self.observations.reshape(self.n_sequences, t * n)
        return SyntheticDataset(values, categorical_schema(n, t), categorical=True)

    @classmethod
    def from_synthetic(cls, d: SyntheticDataset, n_features: int) -> "CategoricalSeries":
        v = np.rint(d.values).astype(int)
        return cls(v.reshape(d.ipc, -1, n_features))


def categorical_schema(n_features: int, length: int) -> tuple[Column, ...]:
    return tuple(Column(f"x{f}_t{t}", CATEGORICAL_STATE)
                 for t in range(length) for f in range(n_features))


def _counts_from_codes(codes: np.ndarray, n_states: int) -> np.ndarray:
    src = codes[:, :-1].ravel()
    dst = codes[:, 1:].ravel()
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (src, dst), 1.0)
    return counts


def transition_counts(series: CategoricalSeries) -> np.ndarray:
    if series.length < 2:
        raise ValueError("series need at least two time steps")
    return _counts_from_codes(series.codes(), series.n_states)


def _normalize_counts(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    totals = counts.sum(axis=1)
    unvisited = totals == 0
    freq = np.full_like(counts, 1.0 / counts.shape[1])
    freq[~unvisited] = counts[~unvisited] / totals[~unvisited, None]
    return freq, unvisited


def transition_frequencies(series: CategoricalSeries, return_unvisited: bool = False):
    """Row-normalized transition counts; unvisited rows are uniform.

    With ``return_unvisited`` the boolean mask of unvisited rows is also returned.
    """
    freq, unvisited = _normalize_counts(transition_counts(series))
    return (freq, unvisited) if return_unvisited else freq


def _check_stochastic(components: np.ndarray) -> np.ndarray:
    comps = np.asarray(components, dtype=float)
    if comps.ndim == 2:
        comps = comps[None]
    if comps.ndim != 3 or comps.shape[1] != comps.shape[2]:
        raise ValueError("components must have shape (m, n_states, n_states)")
    if np.any(comps < 0) or np.max(np.abs(comps.sum(axis=2) - 1.0)) > 1e-12:
        raise ValueError("component rows must be nonnegative and sum to 1")
    return comps


def posterior_mixture_weights(components, counts, alpha: float | None = None) -> np.ndarray:
    """Posterior mixture weights from transition counts.

    Component q scores ``sum_ij counts[i, j] log(M_q[i, j] + eps)``; weights
    are proportional to ``exp(score_q)`` times the uniform Dirichlet prior
    mean. ``alpha`` is the symmetric concentration (default 1/m); only its
    mean enters, so any symmetric value gives the same uniform prior.
    """
    comps = _check_stochastic(components)
    counts = np.asarray(counts, dtype=float)
    m = comps.shape[0]
    if counts.shape != comps.shape[1:]:
        raise ValueError("counts shape does not match the components")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    if alpha is not None and alpha <= 0:
        raise ValueError("alpha must be positive")
    prior = np.full(m, 1.0 / m)
    if counts.sum() == 0:
        return prior
    scores = np.einsum("ij,qij->q", counts, np.log(comps + LOG_EPS)) + np.log(prior)
    w = np.exp(scores - scores.max())
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class MixtureArModel:
    components: np.ndarray  # (m, n_states, n_states)
    mixture_weights: np.ndarray  # (m,)

    def __post_init__(self):
        comps = _check_stochastic(self.components)
        w = np.asarray(self.mixture_weights, dtype=float).ravel()
        if w.shape != (comps.shape[0],):
            raise ValueError("one mixture weight per component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must lie in the simplex")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "mixture_weights", w)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_states(self) -> int:
        return self.components.shape[1]

    @property
    def n_features(self) -> int:
        return round(math.log(self.n_states, N_LEVELS))

    def mixed(self) -> np.ndarray:
        return np.tensordot(self.mixture_weights, self.components, axes=1)

    def to_dict(self) -> dict:
        return {"components": self.components.tolist(),
                "mixture_weights": self.mixture_weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureArModel":
        return cls(np.array(d["components"]), np.array(d["mixture_weights"]))


def forecast(model: MixtureArModel, x_t) -> np.ndarray:
    """Next-state distribution ``(sum_q m_q M_q)^T x_t``."""
    x = np.asarray(x_t, dtype=float).ravel()
    if x.shape != (model.n_states,):
        raise ValueError(f"input must have length {model.n_states}")
    if np.any(x < 0) or abs(x.sum() - 1.0) > 1e-9:
        raise ValueError("input is not a probability distribution")
    return model.mixed().T @ x


def _loss_from_counts(mixed: np.ndarray, counts: np.ndarray) -> float:
    # sum over transitions (i -> j) of |row_i - e_j|^2 = |row_i|^2 - 2 row_i[j] + 1
    total = counts.sum()
    visits = counts.sum(axis=1)
    sq = float(visits @ np.sum(mixed**2, axis=1))
    hit = float(np.sum(counts * mixed))
    return (sq - 2.0 * hit) / total + 1.0


def reconstruction_loss(model: MixtureArModel, series: CategoricalSeries) -> float:
    """Mean squared error of one-step forecasts from one-hot states."""
    counts = transition_counts(series)
    if counts.shape[0] != model.n_states:
        raise ValueError("series and model disagree on the state space")
    return _loss_from_counts(model.mixed(), counts)


def random_components(n_features: int, m: int, seed: int, concentration: float = 0.2) -> np.ndarray:
    """``m`` random transition matrices with Dirichlet rows; small concentration
    gives sparse, well-separated components."""
    k = N_LEVELS**n_features
    rng = np.random.default_rng(seed)
    comps = rng.dirichlet(np.full(k, concentration), size=(m, k))
    return comps / comps.sum(axis=2, keepdims=True)


def sample_series(model: MixtureArModel, n_sequences: int, length: int, seed: int) -> CategoricalSeries:
    """Chains driven by the mixed transition matrix, started uniformly."""
    rng = np.random.default_rng(seed)
    mixed = model.mixed()
    cdf = np.cumsum(mixed, axis=1)
    cdf[:, -1] = 1.0
    codes = np.empty((n_sequences, length), dtype=int)
    codes[:, 0] = rng.integers(model.n_states, size=n_sequences)
    for t in range(1, length):
        u = rng.random(n_sequences)
        codes[:, t] = (u[:, None] > cdf[codes[:, t - 1]]).sum(axis=1)
    n = model.n_features
    obs = np.stack([np.stack([decode_state(c, n) for c in row]) for row in codes])
    return CategoricalSeries(obs)


def pipeline_loss(components: np.ndarray, d_hat_series: CategoricalSeries,
                  train_counts: np.ndarray) -> float:
    """Posterior weights from D-hat, then forecast loss on the training transitions."""
    w = posterior_mixture_weights(components, transition_counts(d_hat_series))
    mixed = np.tensordot(w, components, axes=1)
    return _loss_from_counts(mixed, train_counts)


def subsample_windows(train: CategoricalSeries, ipc: int, length: int, seed: int) -> CategoricalSeries:
    """``ipc`` distinct windows of ``length`` consecutive steps."""
    if not 2 <= length <= train.length:
        raise ValueError(f"length must lie in [2, {train.length}]")
    n_windows = train.n_sequences * (train.length - length + 1)
    if ipc > n_windows:
        raise ValueError(f"ipc={ipc} exceeds the {n_windows} available windows")
    rng = np.random.default_rng(seed)
    pick = rng.choice(n_windows, size=ipc, replace=False)
    seq, start = np.divmod(pick, train.length - length + 1)
    return CategoricalSeries(np.stack([train.observations[s, t:t + length]
                                       for s, t in zip(seq, start)]))


def greedy_distill_categorical(
    train: CategoricalSeries,
    ipc: int,
    length: int,
    components,
    max_sweeps: int = 10,
    seed: int = 0,
    init: CategoricalSeries | None = None,
) -> tuple[SyntheticDataset, list[tuple[int, float]]]:
    """Coordinate descent over the entries of D-hat.

    Each sweep visits entries in row-major order and sets each to the state
    with the lowest pipeline loss, keeping the current value unless another
    is strictly better. Stops after ``max_sweeps`` or a sweep without
    improvement. The trace holds ``(sweep, loss)`` starting at sweep 0.
    """
    if ipc < 1:
        raise ValueError("ipc must be >= 1")
    if length < 2:
        raise ValueError("length must be >= 2")
    comps = _check_stochastic(components)
    if comps.shape[1] != train.n_states:
        raise ValueError("components and series disagree on the state space")
    if init is None:
        init = subsample_windows(train, ipc, length, derive_seed(seed, "init"))
    elif init.observations.shape != (ipc, length, train.n_features):
        raise ValueError("init has the wrong shape")
    train_counts = transition_counts(train)
    obs = init.observations.copy()
    n = train.n_features

    codes = _encode_rows(obs)
    counts = _counts_from_codes(codes, train.n_states)
    place = N_LEVELS ** np.arange(n - 1, -1, -1)

    def loss_of(c: np.ndarray) -> float:
        w = posterior_mixture_weights(comps, c)
        return _loss_from_counts(np.tensordot(w, comps, axes=1), train_counts)

    def moved_counts(l: int, t: int, new_code: int) -> np.ndarray:
        # update only the transitions touching step t
        c = counts.copy()
        old = codes[l, t]
        if t > 0:
            c[codes[l, t - 1], old] -= 1
            c[codes[l, t - 1], new_code] += 1
        if t < length - 1:
            c[old, codes[l, t + 1]] -= 1
            c[new_code, codes[l, t + 1]] += 1
        return c

    current = loss_of(counts)
    trace = [(0, current)]
    for sweep in range(1, max_sweeps + 1):
        improved = False
        for l in range(ipc):
            for t in range(length):
                for f in range(n):
                    old_val = obs[l, t, f]
                    best_val, best_loss, best_counts = old_val, current, None
                    for v in range(N_LEVELS):
                        if v == old_val:
                            continue
                        new_code = codes[l, t] + (v - old_val) * place[f]
                        c = moved_counts(l, t, new_code)
                        cand = loss_of(c)
                        if cand < best_loss:
                            best_val, best_loss, best_counts = v, cand, c
                    if best_counts is not None:
                        codes[l, t] += (best_val - old_val) * place[f]
                        obs[l, t, f] = best_val
                        counts = best_counts
                        current = best_loss
                        improved = True
        trace.append((sweep, current))
        if not improved:
            break
    return CategoricalSeries(obs).to_synthetic(), trace


def write_series_csv(path: str | Path, series: CategoricalSeries) -> None:
    n = series.n_features
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sequence_id", "t", *(f"x{f}" for f in range(n))])
        for l in range(series.n_sequences):
            for t in range(series.length):
                w.writerow([l, t, *series.observations[l, t].tolist()])


def read_series_csv(path: str | Path) -> CategoricalSeries:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[int(x) for x in r] for r in rows])
    n_seq = arr[:, 0].max() + 1
    length = arr[:, 1].max() + 1
    obs = np.zeros((n_seq, length, arr.shape[1] - 2), dtype=int)
    obs[arr[:, 0], arr[:, 1]] = arr[:, 2:]
    return CategoricalSeries(obs)


def save_model(path: str | Path, model: MixtureArModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path: str | Path) -> MixtureArModel:
    return MixtureArModel.from_dict(json.loads(Path(path).read_text()))
