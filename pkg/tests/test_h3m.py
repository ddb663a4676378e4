"""Mixture-of-HMMs likelihood, sampling, EM estimation, and the Monte Carlo
expected-log-likelihood oracle."""

import math

import numpy as np
import pytest

from h3mkit import (
    EmConfig,
    EstimationError,
    Gaussian,
    GaussianMixture,
    H3m,
    Hmm,
    Sequence,
    baum_welch,
    best_label_accuracy,
    forward_loglik,
    h3m_em,
    h3m_loglik,
    h3m_sample,
    mc_expected_loglik,
    sample_batch,
    synth_benchmark,
)

from conftest import random_h3m, random_hmm

STD_NORMAL_SELF = -(1.0 + math.log(2.0 * math.pi)) / 2.0


def std_normal_hmm(mean=0.0):
    return Hmm([1.0], [[1.0]], [GaussianMixture([1.0], [Gaussian([mean], [1.0])])])


class TestH3mLoglik:
    def test_single_component(self, rng):
        hmm = random_hmm(rng, n_states=2, n_mix=2)
        model = H3m([1.0], [hmm])
        obs, _ = sample_batch(hmm, 5, 1, rng)
        seq = Sequence(obs[0])
        assert h3m_loglik(model, seq) == pytest.approx(forward_loglik(hmm, seq), abs=1e-12)

    def test_two_identical_components(self, rng):
        hmm = random_hmm(rng)
        model = H3m([0.3, 0.7], [hmm, hmm])
        obs, _ = sample_batch(hmm, 5, 1, rng)
        seq = Sequence(obs[0])
        assert h3m_loglik(model, seq) == pytest.approx(forward_loglik(hmm, seq), abs=1e-12)

    def test_two_component_composition(self, rng):
        a = random_hmm(rng, mean_scale=1.0)
        b = random_hmm(rng, mean_scale=1.0)
        model = H3m([0.3, 0.7], [a, b])
        obs, _ = sample_batch(a, 4, 1, rng)
        seq = Sequence(obs[0])
        la, lb = forward_loglik(a, seq), forward_loglik(b, seq)
        expected = math.log(0.3 * math.exp(la) + 0.7 * math.exp(lb))
        assert h3m_loglik(model, seq) == pytest.approx(expected, abs=1e-9)

    def test_dominates_each_component(self, rng):
        model = random_h3m(rng, k=3)
        obs, _ = sample_batch(model.components[0], 5, 1, rng)
        seq = Sequence(obs[0])
        total = h3m_loglik(model, seq)
        for w, comp in zip(model.weights, model.components):
            assert total >= math.log(w) + forward_loglik(comp, seq) - 1e-12


class TestH3mSample:
    def test_one_hot_weights(self, rng):
        model = H3m([1.0, 0.0], [std_normal_hmm(0.0), std_normal_hmm(100.0)])
        draws = h3m_sample(model, 5, 50, rng)
        assert all(comp == 0 for _, comp in draws)

    def test_component_frequencies(self, rng):
        model = random_h3m(rng, k=3)
        draws = h3m_sample(model, 2, 100_000, rng)
        comps = np.array([c for _, c in draws])
        for j in range(3):
            p = model.weights[j]
            freq = np.mean(comps == j)
            sigma = math.sqrt(p * (1 - p) / 100_000)
            assert abs(freq - p) < 3 * sigma + 1e-9

    def test_seed_determinism(self, rng):
        model = random_h3m(rng, k=2)
        d1 = h3m_sample(model, 4, 10, np.random.default_rng(5))
        d2 = h3m_sample(model, 4, 10, np.random.default_rng(5))
        for (s1, c1), (s2, c2) in zip(d1, d2):
            assert c1 == c2
            np.testing.assert_array_equal(s1.observations, s2.observations)


class TestH3mEm:
    def test_two_population_separation(self, rng):
        dataset, labels = synth_benchmark(
            2, 40, 10.0, rng, n_states=2, n_mix=1, dim=1, tau=20, kind="sequences"
        )
        fit = h3m_em(dataset.sequences, 2, 2, 1, EmConfig(), np.random.default_rng(0))
        acc = best_label_accuracy(list(labels), list(fit.hard_labels))
        assert acc >= 0.95

    def test_k1_identical_to_baum_welch(self, rng):
        model = random_hmm(rng, n_states=2, n_mix=1, mean_scale=3.0)
        data = [Sequence(sample_batch(model, 12, 1, rng)[0][0]) for _ in range(25)]
        bw = baum_welch(data, 2, 1, EmConfig(max_iters=15), np.random.default_rng(7))
        em = h3m_em(data, 1, 2, 1, EmConfig(max_iters=15), np.random.default_rng(7))
        assert bw.loglik_trace == em.loglik_trace
        np.testing.assert_array_equal(bw.model.initial, em.model.components[0].initial)
        np.testing.assert_array_equal(bw.model.transitions, em.model.components[0].transitions)
        for g1, g2 in zip(bw.model.emissions, em.model.components[0].emissions):
            np.testing.assert_array_equal(g1.weights, g2.weights)
            for c1, c2 in zip(g1.components, g2.components):
                np.testing.assert_array_equal(c1.mean, c2.mean)
                np.testing.assert_array_equal(c1.cov, c2.cov)

    def test_k1_multi_start_matches_baum_welch(self, rng):
        model = random_hmm(rng, n_states=2, n_mix=1, mean_scale=3.0)
        data = [Sequence(sample_batch(model, 10, 1, rng)[0][0]) for _ in range(20)]
        config = EmConfig(max_iters=8, n_starts=3)
        bw = baum_welch(data, 2, 1, config, np.random.default_rng(11))
        em = h3m_em(data, 1, 2, 1, config, np.random.default_rng(11))
        assert bw.loglik_trace == em.loglik_trace

    def test_multi_start_never_worse(self, rng):
        dataset, _ = synth_benchmark(
            2, 20, 8.0, rng, n_states=2, n_mix=1, dim=1, tau=12, kind="sequences"
        )
        single = h3m_em(
            dataset.sequences, 2, 2, 1, EmConfig(max_iters=20),
            np.random.default_rng(3).spawn(4)[0],
        )
        multi = h3m_em(
            dataset.sequences, 2, 2, 1, EmConfig(max_iters=20, n_starts=4),
            np.random.default_rng(3),
        )
        assert multi.loglik_trace[-1] >= single.loglik_trace[-1] - 1e-9

    def test_trace_monotone(self, rng):
        dataset, _ = synth_benchmark(
            2, 20, 6.0, rng, n_states=2, n_mix=1, dim=1, tau=15, kind="sequences"
        )
        fit = h3m_em(dataset.sequences, 2, 2, 1, EmConfig(max_iters=25), np.random.default_rng(1))
        trace = np.array(fit.loglik_trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))

    def test_posterior_rows_stochastic(self, rng):
        dataset, _ = synth_benchmark(
            2, 15, 6.0, rng, n_states=2, n_mix=1, dim=1, tau=10, kind="sequences"
        )
        fit = h3m_em(dataset.sequences, 2, 2, 1, EmConfig(max_iters=10), np.random.default_rng(2))
        np.testing.assert_allclose(fit.posteriors.sum(axis=1), 1.0, atol=1e-12)

    def test_too_few_sequences_rejected(self, rng):
        data = [Sequence(rng.normal(size=(5, 1)))]
        with pytest.raises(EstimationError):
            h3m_em(data, 2, 1, 1, EmConfig(), np.random.default_rng(0))

    def test_reseeds_bounded(self, rng):
        # Overprovisioned k on a 2-population dataset may starve a component;
        # the run must still finish with at most 2 rescues.
        dataset, _ = synth_benchmark(
            2, 15, 8.0, rng, n_states=1, n_mix=1, dim=1, tau=10, kind="sequences"
        )
        fit = h3m_em(dataset.sequences, 3, 1, 1, EmConfig(max_iters=15), np.random.default_rng(3))
        assert 0 <= fit.reseeds <= 2
        assert fit.model.weights.sum() == pytest.approx(1.0, abs=1e-12)


class TestMcExpectedLoglik:
    def test_standard_normal_identity(self, rng):
        hmm = std_normal_hmm()
        mean, stderr = mc_expected_loglik(hmm, hmm, 10, 100_000, rng)
        assert abs(mean - 10 * STD_NORMAL_SELF) < 3 * stderr

    def test_stderr_scaling(self, rng):
        base = random_hmm(rng, n_states=2, n_mix=1)
        reduced = random_hmm(rng, n_states=2, n_mix=1)
        _, se_small = mc_expected_loglik(base, reduced, 5, 20_000, np.random.default_rng(0))
        _, se_large = mc_expected_loglik(base, reduced, 5, 80_000, np.random.default_rng(1))
        assert se_small / se_large == pytest.approx(2.0, rel=0.2)

    def test_self_beats_other(self, rng):
        # Sequence-level Gibbs inequality, checked statistically.
        for _ in range(5):
            base = random_hmm(rng, n_states=2, n_mix=1)
            other = random_hmm(rng, n_states=2, n_mix=1)
            m_self, se_self = mc_expected_loglik(base, base, 5, 20_000, rng)
            m_other, se_other = mc_expected_loglik(base, other, 5, 20_000, rng)
            assert m_other <= m_self + 3 * (se_self + se_other)

    def test_requires_two_samples(self, rng):
        hmm = std_normal_hmm()
        with pytest.raises(ValueError):
            mc_expected_loglik(hmm, hmm, 5, 1, rng)
