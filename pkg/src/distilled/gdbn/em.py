"""EM for linear-Gaussian DBNs with missing entries (NaN marks a masked value).

The E-step conditions the unrolled joint Gaussian on each row's visible
entries; the M-step refits the fixed structure from expected second
moments (imputed values plus the conditional covariance of the missing
block), which keeps the observed-data likelihood monotone.
"""

from __future__ import annotations

import math

import numpy as np

from distilled.gdbn.learn import Moments, fit_from_moments
from distilled.gdbn.model import GaussianDbn

_LOG_2PI = math.log(2.0 * math.pi)


def _check_rows(data: np.ndarray) -> np.ndarray:
    mask = np.isnan(data)
    full = np.flatnonzero(mask.all(axis=1))
    if full.size:
        raise ValueError(f"row {int(full[0])} is fully masked")
    return mask


def e_step(dbn: GaussianDbn, data: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Conditional-mean completion, expected ``[1, x]`` second moments, observed-data LL."""
    data = np.asarray(data, dtype=float)
    mask = _check_rows(data)
    mu, cov = dbn.joint_gaussian()
    d = data.shape[1]
    completed = data.copy()
    S = np.zeros((d + 1, d + 1))
    loglik = 0.0
    patterns, inverse = np.unique(mask, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pat in enumerate(patterns):
        rows = np.flatnonzero(inverse == k)
        o = np.flatnonzero(~pat)
        m = np.flatnonzero(pat)
        xo = data[np.ix_(rows, o)] - mu[o]
        L = np.linalg.cholesky(cov[np.ix_(o, o)])
        white = np.linalg.solve(L, xo.T)
        loglik += float(
            -0.5 * rows.size * (o.size * _LOG_2PI + 2.0 * np.log(np.diag(L)).sum())
            - 0.5 * np.sum(white**2)
        )
        if m.size:
            # K = cov_mo cov_oo^{-1}
            K = np.linalg.solve(L.T, np.linalg.solve(L, cov[np.ix_(o, m)])).T
            completed[np.ix_(rows, m)] = mu[m] + xo @ K.T
            cond = cov[np.ix_(m, m)] - K @ cov[np.ix_(o, m)]
            S[np.ix_(1 + m, 1 + m)] += rows.size * cond
    Z = np.hstack([np.ones((data.shape[0], 1)), completed])
    S += Z.T @ Z
    return completed, S, loglik


def observed_loglik(dbn: GaussianDbn, data: np.ndarray) -> float:
    return e_step(dbn, data)[2]


def em_impute(
    dbn: GaussianDbn, data: np.ndarray, max_iters: int = 20, tol: float = 1e-6
) -> tuple[np.ndarray, GaussianDbn]:
    """Impute masked entries and refit the parameters of ``dbn``'s structure.

    Returns the completion from the last E-step and the refit network; the
    observed-data log-likelihood of every E-step is kept in
    ``refit.meta["em_loglik"]``.
    """
    data = np.asarray(data, dtype=float)
    st = dbn.structure
    if data.ndim != 2 or data.shape[1] != st.n_nodes:
        raise ValueError(f"data must have {st.n_nodes} columns")
    _check_rows(data)
    if not np.isnan(data).any():
        mom = Moments.from_data(data, st.n_vars, st.n_slices)
        refit = fit_from_moments(st, mom)
        return data.copy(), refit.with_params(
            refit.weights, refit.intercept, refit.noise_std,
            {**refit.meta, "em_loglik": [], "em_iters": 0},
        )
    current = dbn
    history: list[float] = []
    completed = data
    for it in range(max(int(max_iters), 1)):
        completed, S, ll = e_step(current, data)
        history.append(ll)
        if it > 0 and ll - history[-2] < tol:
            break
        mom = Moments.from_second_moment(S, data.shape[0], st.n_vars, st.n_slices)
        current = fit_from_moments(st, mom)
    meta = {**current.meta, "em_loglik": history, "em_iters": len(history)}
    return completed, current.with_params(current.weights, current.intercept, current.noise_std, meta)
