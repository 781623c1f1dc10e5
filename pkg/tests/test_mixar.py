import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distilled.mixar import (
    CategoricalSeries,
    MixtureArModel,
    decode_state,
    encode_state,
    forecast,
    greedy_distill_categorical,
    load_model,
    pipeline_loss,
    posterior_mixture_weights,
    random_components,
    read_series_csv,
    reconstruction_loss,
    sample_series,
    save_model,
    transition_counts,
    transition_frequencies,
    write_series_csv,
)

CYCLE = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0.0]])
REVERSE = CYCLE.T.copy()
UNIFORM3 = np.full((3, 3), 1 / 3)


def _series(codes, n=1):
    codes = np.atleast_2d(codes)
    return CategoricalSeries(np.stack([[decode_state(c, n) for c in row] for row in codes]))


def _cycle_train(length=30):
    return CategoricalSeries(np.array([[[i % 3] for i in range(length)]]))


# encoding

def test_encode_examples():
    assert encode_state([0, 0]) == 0
    assert encode_state([1, 2]) == 5


def test_encode_out_of_range():
    with pytest.raises(ValueError):
        encode_state([0, 3])


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_bijection_exhaustive(n):
    codes = [encode_state(x) for x in itertools.product(range(3), repeat=n)]
    assert codes == list(range(3**n))
    for c in range(3**n):
        assert encode_state(decode_state(c, n)) == c


# frequencies

def test_single_transition():
    f = transition_frequencies(_series([0, 1]))
    assert f[0, 1] == 1.0 and f[0].sum() == 1.0


def test_unvisited_rows_uniform_and_flagged():
    f, unvisited = transition_frequencies(_series([0, 1]), return_unvisited=True)
    assert list(unvisited) == [False, True, True]
    np.testing.assert_allclose(f[1], 1 / 3)


def test_short_series_error():
    with pytest.raises(ValueError):
        transition_counts(_series([0]))


@given(st.lists(st.integers(0, 8), min_size=2, max_size=50))
def test_rows_sum_to_one(codes):
    f = transition_frequencies(_series(codes, 2))
    np.testing.assert_allclose(f.sum(axis=1), 1.0, atol=1e-12)


def test_lln_recovery():
    truth = MixtureArModel(random_components(1, 1, 4, concentration=1.0), [1.0])
    s = sample_series(truth, 1, 10_001, 0)
    assert np.max(np.abs(transition_frequencies(s) - truth.components[0])) < 0.05


# posterior weights

def test_single_component_weight_one():
    assert posterior_mixture_weights(CYCLE, np.ones((3, 3))).tolist() == [1.0]


def test_zero_counts_uniform():
    np.testing.assert_allclose(posterior_mixture_weights(np.stack([CYCLE, UNIFORM3]), np.zeros((3, 3))), 0.5)


def test_matching_counts_select_component():
    counts = 1000 / 3 * CYCLE
    w = posterior_mixture_weights(np.stack([CYCLE, UNIFORM3]), counts)
    assert w[0] > 0.99


def test_likelihood_ratio_oracle():
    # two 2-state components; log odds equal the count-weighted log ratio
    a = np.array([[0.9, 0.1], [0.2, 0.8]])
    b = np.array([[0.5, 0.5], [0.5, 0.5]])
    counts = np.array([[3.0, 1.0], [0.0, 2.0]])
    w = posterior_mixture_weights(np.stack([a, b]), counts)
    log_odds = np.sum(counts * (np.log(a + 1e-12) - np.log(b + 1e-12)))
    assert np.log(w[0] / w[1]) == pytest.approx(log_odds, rel=1e-10)


@given(st.integers(0, 1000), st.floats(0.1, 100.0))
def test_argmax_invariant_to_scaling(seed, c):
    comps = random_components(1, 3, seed, concentration=1.0)
    counts = np.random.default_rng(seed).integers(0, 5, size=(3, 3)).astype(float)
    w1 = posterior_mixture_weights(comps, counts)
    w2 = posterior_mixture_weights(comps, c * counts)
    assert np.argmax(w1) == np.argmax(w2) or np.isclose(np.sort(w1)[-1], np.sort(w1)[-2])


def test_weights_recover_single_component():
    comps = random_components(2, 2, 3)
    s = sample_series(MixtureArModel(comps, [1.0, 0.0]), 1, 10_001, 1)
    assert posterior_mixture_weights(comps, transition_counts(s))[0] > 0.99


def test_negative_counts_error():
    with pytest.raises(ValueError):
        posterior_mixture_weights(CYCLE, -np.ones((3, 3)))


# model and forecast

def test_model_validation():
    with pytest.raises(ValueError):
        MixtureArModel(np.array([[[0.5, 0.6], [0.5, 0.5]]]), [1.0])
    with pytest.raises(ValueError):
        MixtureArModel(np.stack([CYCLE, UNIFORM3]), [0.7, 0.2])


def test_identity_forecast():
    m = MixtureArModel(np.eye(3)[None], [1.0])
    x = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(forecast(m, x), x)


def test_doubly_stochastic_uniform():
    m = MixtureArModel(np.stack([CYCLE, UNIFORM3]), [0.4, 0.6])
    np.testing.assert_allclose(forecast(m, np.full(3, 1 / 3)), 1 / 3)


def test_two_state_hand_example():
    a = np.array([[1.0, 0.0], [0.5, 0.5]])
    b = np.array([[0.0, 1.0], [0.0, 1.0]])
    m = MixtureArModel(np.stack([a, b]), [0.5, 0.5])
    # mixed = [[0.5, 0.5], [0.25, 0.75]]; x = (1, 0) -> first row
    np.testing.assert_allclose(forecast(m, [1.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(forecast(m, [0.5, 0.5]), [0.375, 0.625])


def test_forecast_rejects_non_distribution():
    m = MixtureArModel(CYCLE[None], [1.0])
    with pytest.raises(ValueError):
        forecast(m, [0.5, 0.5, 0.5])


@given(st.integers(0, 1000))
def test_forecast_preserves_simplex(seed):
    rng = np.random.default_rng(seed)
    m = MixtureArModel(random_components(2, 3, seed, 1.0), rng.dirichlet(np.ones(3)))
    out = forecast(m, rng.dirichlet(np.ones(9)))
    assert abs(out.sum() - 1) < 1e-12 and np.all(out >= 0)


# reconstruction loss

def test_deterministic_chain_zero_loss():
    assert reconstruction_loss(MixtureArModel(CYCLE[None], [1.0]), _cycle_train()) == pytest.approx(0.0, abs=1e-15)


def test_uniform_forecast_two_thirds():
    s = sample_series(MixtureArModel(UNIFORM3[None], [1.0]), 3, 20, 0)
    assert reconstruction_loss(MixtureArModel(UNIFORM3[None], [1.0]), s) == pytest.approx(2 / 3)


def test_loss_matches_direct_sum():
    m = MixtureArModel(random_components(1, 2, 1, 1.0), [0.3, 0.7])
    s = sample_series(m, 2, 15, 2)
    codes = s.codes()
    mixed = m.mixed()
    direct = np.mean([np.sum((mixed[a] - np.eye(3)[b]) ** 2)
                      for row in codes for a, b in zip(row[:-1], row[1:])])
    assert reconstruction_loss(m, s) == pytest.approx(direct, rel=1e-12)


@given(st.integers(0, 1000), st.floats(0.05, 0.95))
def test_moving_toward_frequencies_helps(seed, step):
    s = sample_series(MixtureArModel(random_components(1, 1, seed, 1.0), [1.0]), 1, 200, seed)
    freq = transition_frequencies(s)
    base = random_components(1, 1, seed + 1, 1.0)[0]
    moved = (1 - step) * base + step * freq
    assert (reconstruction_loss(MixtureArModel(moved[None], [1.0]), s)
            <= reconstruction_loss(MixtureArModel(base[None], [1.0]), s) + 1e-12)


# greedy distiller

def _exhaustive_best(comps, train, length):
    counts = transition_counts(train)
    return min(pipeline_loss(comps, CategoricalSeries(np.array(x).reshape(1, length, 1)), counts)
               for x in itertools.product(range(3), repeat=length))


def test_greedy_cycle_matches_train_and_exhaustive():
    comps = np.stack([CYCLE, REVERSE])
    train = _cycle_train()
    d, trace = greedy_distill_categorical(train, 1, 4, comps, 10, 0)
    own = pipeline_loss(comps, train, transition_counts(train))
    assert abs(trace[-1][1] - own) < 1e-9
    assert abs(trace[-1][1] - _exhaustive_best(comps, train, 4)) < 1e-9


def test_greedy_against_exhaustive_with_uniform_component():
    comps = np.stack([CYCLE, UNIFORM3])
    train = _cycle_train()
    _, trace = greedy_distill_categorical(train, 1, 4, comps, 10, 0)
    assert abs(trace[-1][1] - _exhaustive_best(comps, train, 4)) < 1e-9


def test_zero_sweeps_returns_init():
    train = _cycle_train()
    init = CategoricalSeries(np.zeros((1, 4, 1), dtype=int))
    d, trace = greedy_distill_categorical(train, 1, 4, np.stack([CYCLE, UNIFORM3]), 0, 0, init=init)
    assert np.all(d.values == 0) and len(trace) == 1
    assert d.categorical


@given(st.integers(0, 500), st.integers(1, 4), st.integers(2, 6))
def test_greedy_trace_monotone(seed, ipc, length):
    comps = random_components(1, 3, seed, 0.5)
    train = sample_series(MixtureArModel(comps, [0.5, 0.3, 0.2]), 3, 30, seed)
    _, trace = greedy_distill_categorical(train, ipc, length, comps, 5, seed)
    losses = [l for _, l in trace]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_greedy_bad_args():
    with pytest.raises(ValueError):
        greedy_distill_categorical(_cycle_train(), 0, 4, CYCLE[None], 1, 0)
    with pytest.raises(ValueError):
        greedy_distill_categorical(_cycle_train(), 1, 1, CYCLE[None], 1, 0)


# persistence

def test_series_csv_round_trip(tmp_path):
    s = sample_series(MixtureArModel(random_components(2, 1, 0), [1.0]), 3, 7, 0)
    write_series_csv(tmp_path / "s.csv", s)
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "sequence_id,t,x0,x1"
    np.testing.assert_array_equal(read_series_csv(tmp_path / "s.csv").observations, s.observations)


def test_model_json_round_trip(tmp_path):
    m = MixtureArModel(random_components(1, 2, 0), [0.25, 0.75])
    save_model(tmp_path / "m.json", m)
    back = load_model(tmp_path / "m.json")
    np.testing.assert_array_equal(back.mixed(), m.mixed())
