"""Chain training against exhaustive path enumeration.

enum_posteriors walks every one of the k^L state paths and accumulates the
joint probabilities directly, so it shares no code with the scaled
forward-backward recursion it checks.
"""

import itertools
import math

import numpy as np
import pytest
from conftest import gaussian_pdf, random_chain

from wavemark.errors import NumericError, ParseError, ValidationError
from wavemark.nhmc import (
    ChainParams,
    TrainConfig,
    diagonal_dominance,
    em_train,
    forward_backward,
    load_model,
    sample_chains,
    save_model,
    state_marginals,
    train_model,
)


def enum_posteriors(params, w):
    """Brute-force gamma, xi, and log-likelihood by path enumeration."""
    k, L = params.k, params.L
    total = 0.0
    gamma = np.zeros((L, k))
    xi = np.zeros((L - 1, k, k))
    for path in itertools.product(range(k), repeat=L):
        prob = params.initial_probs[path[0]] * gaussian_pdf(w[0], params.variances[0, path[0]])
        for s in range(1, L):
            prob *= params.transitions[s - 1][path[s], path[s - 1]]
            prob *= gaussian_pdf(w[s], params.variances[s, path[s]])
        total += prob
        for s in range(L):
            gamma[s, path[s]] += prob
        for s in range(L - 1):
            xi[s, path[s], path[s + 1]] += prob
    return gamma / total, xi / total, math.log(total)


def test_forward_backward_matches_enumeration():
    rng = np.random.default_rng(101)
    for _ in range(30):
        k = int(rng.integers(2, 4))
        L = int(rng.integers(2, 7))
        params = random_chain(rng, k, L)
        w = rng.standard_normal(L) * 1.5
        post = forward_backward(w, params)
        gamma, xi, ll = enum_posteriors(params, w)
        assert np.max(np.abs(post.gamma - gamma)) < 1e-9
        assert np.max(np.abs(post.xi - xi)) < 1e-9
        assert post.log_likelihood == pytest.approx(ll, abs=1e-9)


def test_posterior_normalization():
    rng = np.random.default_rng(55)
    for _ in range(20):
        params = random_chain(rng, 3, 6)
        post = forward_backward(rng.standard_normal(6), params)
        assert np.max(np.abs(post.gamma.sum(axis=1) - 1.0)) < 1e-9
        assert np.max(np.abs(post.xi.sum(axis=(1, 2)) - 1.0)) < 1e-9
        # pairwise posteriors marginalize back to the singleton ones
        assert np.max(np.abs(post.xi.sum(axis=2) - post.gamma[:-1])) < 1e-9
        assert np.max(np.abs(post.xi.sum(axis=1) - post.gamma[1:])) < 1e-9


def test_forward_backward_input_checks():
    params = random_chain(np.random.default_rng(0), 2, 4)
    with pytest.raises(ValidationError):
        forward_backward(np.zeros(3), params)
    with pytest.raises(ValidationError):
        forward_backward(np.array([0.0, np.nan, 0.0, 0.0]), params)


def test_vanished_mass_names_the_scale():
    # the child state is forced to 0, whose tiny variance underflows against
    # a huge coefficient once the per-scale shift normalizes to state 1
    params = ChainParams(
        np.array([1.0, 0.0]),
        np.array([[[1.0, 1.0], [0.0, 0.0]]]),
        np.array([[1.0, 1.0], [1e-30, 1.0]]),
    )
    with pytest.raises(NumericError, match="scale 2"):
        forward_backward(np.array([0.0, 1000.0]), params)


def test_chain_params_validation():
    rng = np.random.default_rng(1)
    good = random_chain(rng, 2, 3)
    with pytest.raises(ValidationError):
        ChainParams(np.array([0.6, 0.6]), good.transitions, good.variances)
    bad_cols = good.transitions.copy()
    bad_cols[0, :, 0] = [0.7, 0.7]
    with pytest.raises(ValidationError):
        ChainParams(good.initial_probs, bad_cols, good.variances)
    with pytest.raises(ValidationError):
        ChainParams(good.initial_probs, good.transitions, np.zeros((3, 2)))
    with pytest.raises(ValidationError):
        ChainParams(good.initial_probs, good.transitions[:1], good.variances)


def test_em_monotone_log_likelihood():
    rng = np.random.default_rng(77)
    W = rng.standard_normal((40, 5)) * np.array([2.0, 1.5, 1.0, 0.7, 0.5])
    for trial in range(10):
        init = random_chain(rng, 3, 5, var_lo=0.2, var_hi=2.0)
        result = em_train(W, 3, TrainConfig(max_iter=40), init=init)
        diffs = np.diff(result.log_likelihoods)
        assert np.all(diffs >= -1e-9), f"init {trial}: drop {diffs.min()}"


def test_em_converges_and_relabels_ascending():
    rng = np.random.default_rng(13)
    truth = ChainParams(
        np.array([0.7, 0.3]),
        np.tile(np.array([[0.85, 0.25], [0.15, 0.75]]), (4, 1, 1)),
        np.tile(np.array([0.05, 2.0]), (5, 1)),
    )
    _, W = sample_chains(truth, 500, seed=3)
    result = em_train(W, 2)
    assert result.converged
    assert result.n_iter == len(result.log_likelihoods) - 1
    assert np.all(np.diff(result.params.variances, axis=1) >= 0.0)


def test_em_parameter_recovery_small():
    truth = ChainParams(
        np.array([0.6, 0.4]),
        np.tile(np.array([[0.9, 0.2], [0.1, 0.8]]), (4, 1, 1)),
        np.tile(np.array([0.04, 3.0]), (5, 1)),
    )
    _, W = sample_chains(truth, 1500, seed=9)
    result = em_train(W, 2)
    est = result.params
    assert np.max(np.abs(est.transitions - truth.transitions)) < 0.08
    rel = np.abs(est.variances - truth.variances) / truth.variances
    assert np.max(rel) < 0.15


def test_em_starved_state_warns_and_stays_valid():
    # state 2 starts unreachable (zero initial mass, zero inbound transition
    # mass), so its posterior mass is exactly zero and the first M step must
    # take the fallback for both its transition column and its variances
    rng = np.random.default_rng(21)
    W = rng.standard_normal((12, 4))
    col = np.array([0.6, 0.4, 0.0])
    init = ChainParams(
        np.array([0.5, 0.5, 0.0]),
        np.tile(col[:, None], (3, 1, 3)),
        np.tile(np.array([0.5, 1.0, 2.0]), (4, 1)),
    )
    with pytest.warns(UserWarning, match="starved"):
        result = em_train(W, 3, TrainConfig(max_iter=5), init=init)
    assert result.warnings
    # fallback still yields a valid ChainParams (constructor re-checks)
    assert result.params.k == 3


def test_em_input_validation():
    with pytest.raises(ValidationError):
        em_train(np.zeros((1, 4)), 2)
    with pytest.raises(ValidationError):
        em_train(np.zeros((4, 1)), 2)
    with pytest.raises(ValidationError):
        em_train(np.zeros((4, 4)), 1)
    bad_init = random_chain(np.random.default_rng(0), 3, 4)
    with pytest.raises(ValidationError):
        em_train(np.zeros((4, 4)), 2, init=bad_init)


def test_state_marginals_match_enumeration():
    rng = np.random.default_rng(31)
    params = random_chain(rng, 3, 5)
    marg = state_marginals(params)
    k, L = params.k, params.L
    brute = np.zeros((L, k))
    for path in itertools.product(range(k), repeat=L):
        prob = params.initial_probs[path[0]]
        for s in range(1, L):
            prob *= params.transitions[s - 1][path[s], path[s - 1]]
        for s in range(L):
            brute[s, path[s]] += prob
    assert np.max(np.abs(marg - brute)) < 1e-12
    assert np.max(np.abs(marg.sum(axis=1) - 1.0)) < 1e-12


def test_sampler_matches_model_statistics():
    rng = np.random.default_rng(3)
    params = random_chain(rng, 3, 4, var_lo=0.5, var_hi=2.0)
    states, coeffs = sample_chains(params, 40000, seed=17)
    assert states.shape == coeffs.shape == (40000, 4)
    marg = state_marginals(params)
    for s in range(4):
        freq = np.bincount(states[:, s], minlength=3) / 40000.0
        assert np.max(np.abs(freq - marg[s])) < 0.02
    # emission second moments per (scale, state)
    for s in range(4):
        for i in range(3):
            mask = states[:, s] == i
            if mask.sum() > 500:
                ratio = coeffs[mask, s].var() / params.variances[s, i]
                assert 0.85 < ratio < 1.15
    again_states, again_coeffs = sample_chains(params, 40000, seed=17)
    assert np.array_equal(states, again_states)
    assert np.array_equal(coeffs, again_coeffs)


def test_train_model_shapes_metadata_and_determinism():
    rng = np.random.default_rng(8)
    tensor = rng.standard_normal((12, 4, 6)) * 0.3  # (M, L, N)
    model = train_model(tensor, k=2, wavelet="haar")
    assert model.k == 2 and model.L == 4 and model.N == 6
    meta = model.metadata
    assert meta["k"] == 2
    assert meta["n_training_spectra"] == 12
    assert "final_log_likelihood" in meta
    again = train_model(tensor, k=2, wavelet="haar")
    for a, b in zip(model.chains, again.chains):
        assert np.array_equal(a.variances, b.variances)
        assert np.array_equal(a.transitions, b.transitions)
        assert np.array_equal(a.initial_probs, b.initial_probs)


def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    tensor = rng.standard_normal((8, 3, 4))
    model = train_model(tensor, k=2)
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert back.k == model.k and back.L == model.L and back.N == model.N
    assert back.wavelet == model.wavelet
    for a, b in zip(model.chains, back.chains):
        assert np.array_equal(a.initial_probs, b.initial_probs)
        assert np.array_equal(a.transitions, b.transitions)
        assert np.array_equal(a.variances, b.variances)
    assert back.metadata == model.metadata
    with pytest.raises(ParseError):
        load_model(tmp_path / "absent.json")


def test_diagonal_dominance_range():
    rng = np.random.default_rng(2)
    tensor = rng.standard_normal((10, 3, 3))
    model = train_model(tensor, k=2)
    assert 0.0 <= diagonal_dominance(model) <= 1.0
