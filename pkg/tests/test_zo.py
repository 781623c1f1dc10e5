import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distilled.core import Column, InferenceTaskBinding, SyntheticDataset
from distilled.zo import (
    Constant,
    DivergenceError,
    InverseSqrt,
    NonFiniteLossError,
    StepDecay,
    ZoConfig,
    stepsize,
    two_point_gradient,
    zo_distill,
)


def _ds(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return SyntheticDataset(x, [Column(f"c{j}", "x") for j in range(x.shape[1])])


def _cos(a, b):
    a, b = a.ravel(), b.ravel()
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_stepsize_values():
    assert stepsize(InverseSqrt(0.1), 0) == pytest.approx(0.1)
    assert stepsize(InverseSqrt(0.1), 3) == pytest.approx(0.05)
    assert stepsize(Constant(4e-5), 17) == 4e-5
    assert stepsize(StepDecay(1.0, 0.5, 10), 25) == 0.25


def test_stepsize_negative_k():
    with pytest.raises(ValueError):
        stepsize(Constant(1.0), -1)


@given(st.integers(1, 30), st.floats(1e-4, 1.0))
def test_constant_loss_zero_gradient(m, sigma):
    g = two_point_gradient(lambda d: 7.0, _ds(np.ones((3, 2))), ZoConfig(m, sigma), 0)
    assert np.all(g == 0)


def test_exact_evaluation_count():
    calls = []
    two_point_gradient(lambda d: calls.append(1) or 0.0, _ds(np.zeros((2, 2))), ZoConfig(13, 0.1), 0)
    assert len(calls) == 14


def test_sphere_direction():
    g = two_point_gradient(lambda d: float(np.sum(d.values**2)), _ds([1.0, 0.0]), ZoConfig(2000, 1e-3), 3)
    assert _cos(g, np.array([2.0, 0.0])) > 0.9


def test_estimator_mean_converges():
    rng = np.random.default_rng(0)
    target = rng.normal(size=(2, 5))
    x = _ds(rng.normal(size=(2, 5)))
    loss = lambda d: float(np.sum((d.values - target) ** 2))
    avg = np.mean([two_point_gradient(loss, x, ZoConfig(500, 1e-4), s) for s in range(50)], axis=0)
    true = 2 * (x.values - target)
    assert np.linalg.norm(avg - true) / np.linalg.norm(true) < 0.05


def test_bit_reproducible():
    loss = lambda d: float(np.sum(np.sin(d.values)))
    a = two_point_gradient(loss, _ds(np.ones((2, 3))), ZoConfig(5, 0.1), 9)
    b = two_point_gradient(loss, _ds(np.ones((2, 3))), ZoConfig(5, 0.1), 9)
    np.testing.assert_array_equal(a, b)


def test_non_finite_probe_identified():
    def loss(d):
        return np.inf if d.values[0, 0] != 0.0 else 0.0

    with pytest.raises(NonFiniteLossError) as info:
        two_point_gradient(loss, _ds(np.zeros((1, 2))), ZoConfig(3, 0.1), 0)
    assert info.value.probe == 1


def test_invalid_config():
    with pytest.raises(ValueError):
        ZoConfig(0, 0.1)
    with pytest.raises(ValueError):
        ZoConfig(3, 0.0)


def _quad_sampler(target):
    binding = InferenceTaskBinding("quad", lambda d, batch, seed: float(np.sum((d.values - target) ** 2)))
    return lambda k, rng: (binding, None)


def test_zo_contracts_quadratic():
    rng = np.random.default_rng(0)
    target = rng.normal(size=(2, 5))
    d0 = _ds(np.zeros((2, 5)))
    d, trace = zo_distill(_quad_sampler(target), d0, ZoConfig(20, 1e-2, 500, Constant(0.05)), 1)
    final = float(np.sum((d.values - target) ** 2))
    assert final < 0.1 * trace[0][1]
    assert len(trace) == 500
    assert [k for k, _ in trace] == list(range(500))
    assert d.values.shape == d0.values.shape


def test_zero_iterations_identity():
    d0 = _ds(np.ones((2, 2)))
    d, trace = zo_distill(_quad_sampler(np.zeros((2, 2))), d0, ZoConfig(3, 0.1, 0), 0)
    np.testing.assert_array_equal(d.values, d0.values)
    assert trace == []


def test_divergence_guard():
    target = np.zeros((1, 2))
    cfg = ZoConfig(5, 1e-2, 200, Constant(10.0))
    with pytest.raises(DivergenceError) as info:
        zo_distill(_quad_sampler(target), _ds([[1.0, 1.0]]), cfg, 0)
    assert info.value.trace
