"""HMM likelihood against exhaustive enumeration, sampling statistics, state
marginals, and Baum-Welch behavior. The enumeration oracle below scores
emissions through scipy.stats so it shares no density code with the library."""

import itertools
import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from h3mkit import (
    EmConfig,
    EstimationError,
    Gaussian,
    GaussianMixture,
    Hmm,
    InvalidModelError,
    Sequence,
    baum_welch,
    forward_loglik,
    forward_loglik_batch,
    sample,
    sample_batch,
    state_marginals,
)

from conftest import align_means, random_hmm


def enumeration_loglik(model: Hmm, obs: np.ndarray) -> float:
    """Brute-force log p(obs) as a sum over all hidden state sequences,
    with emission densities from scipy."""
    tau = obs.shape[0]
    n = model.n_states

    def emission_density(t, state):
        gmm = model.emissions[state]
        total = 0.0
        for w, comp in zip(gmm.weights, gmm.components):
            cov = np.diag(comp.cov) if comp.cov.ndim == 1 else comp.cov
            total += w * multivariate_normal.pdf(obs[t], mean=comp.mean, cov=cov)
        return total

    total = 0.0
    for path in itertools.product(range(n), repeat=tau):
        prob = model.initial[path[0]] * emission_density(0, path[0])
        for t in range(1, tau):
            prob *= model.transitions[path[t - 1], path[t]] * emission_density(t, path[t])
        total += prob
    return math.log(total)


class TestForward:
    def test_single_state_single_component(self, rng):
        g = Gaussian([0.5], [2.0])
        model = Hmm([1.0], [[1.0]], [GaussianMixture([1.0], [g])])
        obs = rng.normal(size=(6, 1))
        expected = float(np.sum(g.log_density(obs)))
        assert forward_loglik(model, Sequence(obs)) == pytest.approx(expected, abs=1e-12)

    def test_length_one_marginal(self, rng):
        model = random_hmm(rng, n_states=3, n_mix=2)
        y = rng.normal(size=(1, 1))
        per_state = np.array([model.emissions[s].log_density(y)[0] for s in range(3)])
        expected = float(np.log(np.sum(model.initial * np.exp(per_state))))
        assert forward_loglik(model, Sequence(y)) == pytest.approx(expected, abs=1e-10)

    def test_matches_enumeration_2_states(self, rng):
        model = random_hmm(rng, n_states=2, n_mix=1, dim=1)
        obs, _ = sample_batch(model, 4, 1, rng)
        expected = enumeration_loglik(model, obs[0])
        assert forward_loglik(model, Sequence(obs[0])) == pytest.approx(expected, abs=1e-9)

    def test_matches_enumeration_property(self, rng):
        # All shapes with N^tau <= 10^4.
        for n_states, tau in [(2, 6), (3, 5), (4, 4), (10, 4)]:
            model = random_hmm(rng, n_states=n_states, n_mix=2, dim=2)
            obs, _ = sample_batch(model, tau, 1, rng)
            expected = enumeration_loglik(model, obs[0])
            assert forward_loglik(model, Sequence(obs[0])) == pytest.approx(expected, abs=1e-9)

    def test_batch_matches_scalar(self, rng):
        model = random_hmm(rng, n_states=3, n_mix=2, dim=2)
        obs, _ = sample_batch(model, 7, 5, rng)
        batch = forward_loglik_batch(model, obs)
        singles = [forward_loglik(model, Sequence(o)) for o in obs]
        np.testing.assert_allclose(batch, singles, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        model = random_hmm(rng, dim=2)
        with pytest.raises(InvalidModelError):
            forward_loglik(model, Sequence(np.zeros((3, 1))))

    def test_empty_sequence_rejected(self):
        with pytest.raises(InvalidModelError):
            Sequence(np.zeros((0, 1)))


class TestStateMarginals:
    def test_first_row_is_initial(self, rng):
        model = random_hmm(rng, n_states=3)
        np.testing.assert_allclose(state_marginals(model, 5)[0], model.initial)

    def test_doubly_stochastic_stays_uniform(self):
        model = Hmm(
            [0.5, 0.5],
            [[0.3, 0.7], [0.7, 0.3]],
            [
                GaussianMixture([1.0], [Gaussian([0.0], [1.0])]),
                GaussianMixture([1.0], [Gaussian([1.0], [1.0])]),
            ],
        )
        marg = state_marginals(model, 6)
        np.testing.assert_allclose(marg, 0.5 * np.ones((6, 2)), atol=1e-12)

    def test_alternating_chain(self):
        model = Hmm(
            [1.0, 0.0],
            [[0.0, 1.0], [1.0, 0.0]],
            [
                GaussianMixture([1.0], [Gaussian([0.0], [1.0])]),
                GaussianMixture([1.0], [Gaussian([1.0], [1.0])]),
            ],
        )
        marg = state_marginals(model, 3)
        np.testing.assert_allclose(marg[2], [1.0, 0.0], atol=1e-15)

    def test_rows_sum_to_one(self, rng):
        model = random_hmm(rng, n_states=4)
        np.testing.assert_allclose(state_marginals(model, 10).sum(axis=1), 1.0, atol=1e-12)


class TestSample:
    def test_degenerate_model_deterministic_path(self, rng):
        model = Hmm(
            [1.0, 0.0],
            [[0.0, 1.0], [1.0, 0.0]],
            [
                GaussianMixture([1.0], [Gaussian([0.0], [1.0])]),
                GaussianMixture([1.0], [Gaussian([5.0], [1.0])]),
            ],
        )
        _, states = sample(model, 6, rng)
        np.testing.assert_array_equal(states, [0, 1, 0, 1, 0, 1])

    def test_initial_state_frequencies(self, rng):
        model = random_hmm(rng, n_states=3)
        _, states = sample_batch(model, 2, 100_000, rng)
        for s in range(3):
            p = model.initial[s]
            freq = np.mean(states[:, 0] == s)
            sigma = math.sqrt(p * (1 - p) / 100_000)
            assert abs(freq - p) < 3 * sigma + 1e-9

    def test_seed_determinism(self, rng):
        model = random_hmm(rng, n_states=2, n_mix=2, dim=2)
        seq_a, states_a = sample(model, 10, np.random.default_rng(99))
        seq_b, states_b = sample(model, 10, np.random.default_rng(99))
        np.testing.assert_array_equal(seq_a.observations, seq_b.observations)
        np.testing.assert_array_equal(states_a, states_b)

    def test_full_cov_sampling_moments(self, rng):
        cov = np.array([[2.0, 0.8], [0.8, 1.0]])
        model = Hmm(
            [1.0],
            [[1.0]],
            [GaussianMixture([1.0], [Gaussian([1.0, -1.0], cov)])],
        )
        obs, _ = sample_batch(model, 1, 200_000, rng)
        flat = obs[:, 0, :]
        np.testing.assert_allclose(flat.mean(axis=0), [1.0, -1.0], atol=0.02)
        np.testing.assert_allclose(np.cov(flat.T), cov, atol=0.03)


class TestBaumWelch:
    def test_two_state_recovery(self, rng):
        truth = Hmm(
            [0.5, 0.5],
            [[0.8, 0.2], [0.2, 0.8]],
            [
                GaussianMixture([1.0], [Gaussian([-5.0], [1.0])]),
                GaussianMixture([1.0], [Gaussian([5.0], [1.0])]),
            ],
        )
        data = [Sequence(sample_batch(truth, 20, 1, rng)[0][0]) for _ in range(200)]
        fit = baum_welch(data, 2, 1, EmConfig(), np.random.default_rng(0))
        aligned = align_means(truth, fit.model)
        truth_means = np.array([[[-5.0]], [[5.0]]])
        assert np.max(np.abs(aligned - truth_means)) < 0.2

    def test_single_state_closed_form(self, rng):
        data = [Sequence(rng.normal(2.0, 1.5, size=(30, 1))) for _ in range(5)]
        fit = baum_welch(data, 1, 1, EmConfig(max_iters=3), np.random.default_rng(0))
        pooled = np.concatenate([s.observations for s in data])
        comp = fit.model.emissions[0].components[0]
        assert comp.mean[0] == pytest.approx(pooled.mean(), abs=1e-9)
        assert comp.cov[0] == pytest.approx(pooled.var(), abs=1e-9)

    def test_trace_monotone(self, rng):
        model = random_hmm(rng, n_states=2, n_mix=2, dim=2, mean_scale=3.0)
        data = [Sequence(sample_batch(model, 15, 1, rng)[0][0]) for _ in range(40)]
        fit = baum_welch(data, 2, 2, EmConfig(max_iters=30), np.random.default_rng(1))
        trace = np.array(fit.loglik_trace)
        deltas = np.diff(trace)
        assert np.all(deltas >= -1e-8 * np.abs(trace[:-1]))

    def test_degenerate_data_rejected(self):
        data = [Sequence(np.zeros((10, 1)))]
        with pytest.raises(EstimationError):
            baum_welch(data, 2, 2, EmConfig(), np.random.default_rng(0))

    def test_rows_stochastic_after_fit(self, rng):
        model = random_hmm(rng, n_states=3, n_mix=2, dim=1, mean_scale=3.0)
        data = [Sequence(sample_batch(model, 12, 1, rng)[0][0]) for _ in range(30)]
        fit = baum_welch(data, 3, 2, EmConfig(max_iters=10), np.random.default_rng(2))
        m = fit.model
        assert m.initial.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(m.transitions.sum(axis=1), 1.0, atol=1e-12)
        for gmm in m.emissions:
            assert gmm.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_one_state_round_trip_mean(self, rng):
        truth = Hmm(
            [1.0], [[1.0]], [GaussianMixture([1.0], [Gaussian([3.0], [4.0])])]
        )
        data = [Sequence(sample_batch(truth, 100, 1, rng)[0][0]) for _ in range(100)]
        fit = baum_welch(data, 1, 1, EmConfig(max_iters=5), np.random.default_rng(3))
        n_obs = 100 * 100
        stderr = math.sqrt(4.0 / n_obs)
        assert abs(fit.model.emissions[0].components[0].mean[0] - 3.0) < 3 * stderr

    def test_full_covariance_fit(self, rng):
        cov = np.array([[1.5, 0.6], [0.6, 1.0]])
        truth = Hmm(
            [1.0], [[1.0]], [GaussianMixture([1.0], [Gaussian([0.0, 0.0], cov)])]
        )
        data = [Sequence(sample_batch(truth, 50, 1, rng)[0][0]) for _ in range(50)]
        fit = baum_welch(
            data, 1, 1, EmConfig(max_iters=5, cov_type="full"), np.random.default_rng(4)
        )
        fitted = fit.model.emissions[0].components[0].cov
        assert fitted.shape == (2, 2)
        np.testing.assert_allclose(fitted, cov, atol=0.15)
