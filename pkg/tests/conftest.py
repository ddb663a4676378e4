"""Shared random-model builders for the test suite."""

import itertools

import numpy as np
import pytest

from h3mkit import Gaussian, GaussianMixture, H3m, Hmm


def random_gaussian(rng, dim=1, cov_type="diag", mean_scale=2.0):
    mean = rng.normal(0.0, mean_scale, size=dim)
    if cov_type == "diag":
        return Gaussian(mean, rng.uniform(0.5, 2.0, size=dim))
    root = rng.normal(0.0, 0.5, size=(dim, dim))
    cov = root @ root.T + np.eye(dim)
    return Gaussian(mean, cov)


def random_gmm(rng, n_mix=2, dim=1, cov_type="diag", mean_scale=2.0):
    comps = [random_gaussian(rng, dim, cov_type, mean_scale) for _ in range(n_mix)]
    return GaussianMixture(rng.dirichlet(np.ones(n_mix)), comps)


def random_hmm(rng, n_states=2, n_mix=1, dim=1, cov_type="diag", mean_scale=2.0):
    initial = rng.dirichlet(np.ones(n_states))
    transitions = np.stack([rng.dirichlet(np.ones(n_states)) for _ in range(n_states)])
    emissions = [random_gmm(rng, n_mix, dim, cov_type, mean_scale) for _ in range(n_states)]
    return Hmm(initial, transitions, emissions)


def random_h3m(rng, k=3, n_states=2, n_mix=1, dim=1, cov_type="diag", mean_scale=2.0):
    components = [random_hmm(rng, n_states, n_mix, dim, cov_type, mean_scale) for _ in range(k)]
    return H3m(rng.dirichlet(np.ones(k)), components)


def align_means(reference, candidate):
    """Best permutation of candidate state means against the reference, by
    total squared distance; returns the aligned (N, M, d) mean array."""
    ref = np.stack([[c.mean for c in g.components] for g in reference.emissions])
    cand = np.stack([[c.mean for c in g.components] for g in candidate.emissions])
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(cand.shape[0])):
        permuted = cand[list(perm)]
        cost = float(np.sum((permuted - ref) ** 2))
        if cost < best_cost:
            best, best_cost = permuted, cost
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
