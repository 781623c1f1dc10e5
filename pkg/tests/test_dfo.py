import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distilled.core import Column, SyntheticDataset
from distilled.dfo import DfoConfig, dfo_search


def _ds(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return SyntheticDataset(x, [Column(f"c{j}", "x") for j in range(x.shape[1])])


sphere = lambda d: float(np.sum(d.values**2))


def test_budget_one_constant_loss():
    d0 = _ds(np.ones((2, 2)))
    best, loss, trace = dfo_search(lambda d: 1.0, d0, DfoConfig(budget=1), 0)
    assert best is d0 and loss == 1.0 and len(trace) == 2


def test_sphere_beats_random_search():
    d0 = _ds(np.ones((5, 2)))
    _, loss, trace = dfo_search(sphere, d0, DfoConfig(budget=500), 0)
    assert loss < 0.1 * trace[0][1]
    # oracle: random search with the same budget around d_init
    rng = np.random.default_rng(0)
    rs = min(sphere(_ds(d0.values + 0.1 * rng.standard_normal((5, 2)))) for _ in range(500))
    assert loss < rs


@given(st.integers(1, 60), st.integers(0, 10_000))
def test_trace_invariants(budget, seed):
    calls = []

    def loss(d):
        calls.append(1)
        return sphere(d)

    d0 = _ds(np.full((2, 3), 0.7))
    _, best, trace = dfo_search(loss, d0, DfoConfig(budget=budget), seed)
    assert len(calls) == budget + 1 == len(trace)
    bests = [b for _, _, b in trace]
    assert all(b2 <= b1 for b1, b2 in zip(bests, bests[1:]))
    assert best == bests[-1] <= trace[0][1]


def test_nested_budgets_share_prefix():
    d0 = _ds(np.full((3, 2), 2.0))
    short = dfo_search(sphere, d0, DfoConfig(budget=20), 4)
    long = dfo_search(sphere, d0, DfoConfig(budget=80), 4)
    assert long[2][:21] == short[2]
    assert long[1] <= short[1]


def test_reproducible():
    d0 = _ds(np.ones((2, 2)))
    a = dfo_search(sphere, d0, DfoConfig(budget=30), 1)
    b = dfo_search(sphere, d0, DfoConfig(budget=30), 1)
    np.testing.assert_array_equal(a[0].values, b[0].values)


def test_non_finite_init():
    with pytest.raises(ValueError):
        dfo_search(lambda d: np.nan, _ds([[1.0]]), DfoConfig(), 0)


def test_non_finite_candidates_rejected():
    d0 = _ds([[1.0]])
    seen = []

    def loss(d):
        seen.append(1)
        return 1.0 if len(seen) == 1 else np.inf

    best, val, trace = dfo_search(loss, d0, DfoConfig(budget=5), 0)
    assert best is d0 and val == 1.0 and len(trace) == 6


def test_config_validation():
    for kw in ({"budget": 0}, {"mutation_scale": 0.0}, {"scale_adapt": 1.0}):
        with pytest.raises(ValueError):
            DfoConfig(**kw)
