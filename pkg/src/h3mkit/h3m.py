"""Mixtures of HMMs: the model type, likelihood, EM estimation from raw
sequences, sampling, and the Monte Carlo expected-log-likelihood oracle.

One mixture component is responsible for a whole sequence (the assignment is
drawn once per sequence, not per frame). The EM estimator shares its
sufficient-statistic and update machinery with ``baum_welch``; with a single
component it reduces to it exactly, float for float.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import EstimationError, InvalidModelError
from .gaussians import check_probability_vector
from .hmm import (
    EmConfig,
    Hmm,
    Sequence,
    _check_data,
    _expected_stats,
    _init_hmm,
    _mstep,
    _Stats,
    forward_loglik,
    forward_loglik_batch,
    group_by_length,
    sample_batch,
)


@dataclass
class H3m:
    """Mixture of HMMs with shared state count, mixture size, and dimension."""

    weights: np.ndarray
    components: list[Hmm]

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.ndim != 1:
            raise InvalidModelError("mixture weights must be a vector")
        if len(self.components) == 0:
            raise InvalidModelError("mixture needs at least one component")
        if self.weights.shape[0] != len(self.components):
            raise InvalidModelError(
                f"{self.weights.shape[0]} weights for {len(self.components)} components"
            )
        check_probability_vector(self.weights, "mixture weights")
        first = self.components[0]
        for idx, hmm in enumerate(self.components):
            if (
                hmm.n_states != first.n_states
                or hmm.n_mix != first.n_mix
                or hmm.dim != first.dim
            ):
                raise InvalidModelError(
                    f"component {idx} has (N={hmm.n_states}, M={hmm.n_mix}, d={hmm.dim}),"
                    f" expected (N={first.n_states}, M={first.n_mix}, d={first.dim})"
                )

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def n_states(self) -> int:
        return self.components[0].n_states

    @property
    def n_mix(self) -> int:
        return self.components[0].n_mix

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass
class H3mFit:
    """Fitted mixture, per-sequence assignment posteriors, and the
    total log-likelihood trace."""

    model: H3m
    posteriors: np.ndarray  # (n_sequences, K)
    loglik_trace: list[float]
    reseeds: int = 0

    @property
    def n_iters(self) -> int:
        return len(self.loglik_trace) - 1

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.posteriors, axis=1)


def h3m_loglik(model: H3m, seq: Sequence) -> float:
    """Log-likelihood of one sequence under the mixture."""
    lls = np.array([forward_loglik(comp, seq) for comp in model.components])
    with np.errstate(divide="ignore"):
        return float(logsumexp(np.log(model.weights) + lls))


def h3m_loglik_batch(model: H3m, obs: np.ndarray) -> np.ndarray:
    """Mixture log-likelihood of each sequence in an (S, tau, d) batch."""
    per_comp = np.stack(
        [forward_loglik_batch(comp, obs) for comp in model.components], axis=1
    )
    with np.errstate(divide="ignore"):
        return logsumexp(np.log(model.weights)[None, :] + per_comp, axis=1)


def h3m_sample(
    model: H3m, tau: int, count: int, rng: np.random.Generator
) -> list[tuple[Sequence, int]]:
    """Draw ``count`` sequences; each pairs the sample with the index of the
    component that generated it. Deterministic given the generator."""
    cum = np.cumsum(model.weights)
    u = rng.random(count)
    comps = np.minimum(np.sum(u[:, None] >= cum[None, :], axis=1), model.n_components - 1)
    out: list[tuple[Sequence, int] | None] = [None] * count
    for j in range(model.n_components):
        positions = np.nonzero(comps == j)[0]
        if positions.size == 0:
            continue
        obs, _ = sample_batch(model.components[j], tau, positions.size, rng)
        for row, pos in enumerate(positions):
            out[pos] = (Sequence(obs[row]), j)
    return out  # type: ignore[return-value]


def mc_expected_loglik(
    base: Hmm, reduced: Hmm, tau: int, n_samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo estimate of E over sequences from ``base`` of the log-
    likelihood under ``reduced``; returns (mean, standard error)."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    obs, _ = sample_batch(base, tau, n_samples, rng)
    lls = forward_loglik_batch(reduced, obs)
    return float(lls.mean()), float(lls.std(ddof=1) / np.sqrt(n_samples))


def _component_logliks(
    components: list[Hmm], groups: list[tuple[np.ndarray, np.ndarray]], n_seq: int
) -> np.ndarray:
    ll_mat = np.empty((n_seq, len(components)))
    for j, comp in enumerate(components):
        for obs, idxs in groups:
            ll_mat[idxs, j] = forward_loglik_batch(comp, obs)
    return ll_mat


def h3m_em(
    data: list[Sequence],
    k: int,
    n_states: int,
    n_mix: int,
    config: EmConfig | None = None,
    rng: np.random.Generator | None = None,
) -> H3mFit:
    """EM estimation of a K-component HMM mixture from raw sequences.

    Sequence-level assignments: responsibilities are computed per sequence in
    log domain. A component whose total responsibility falls below
    n_sequences / (10 K) is re-seeded from the sequence the current mixture
    models worst, at most twice per run. With config.n_starts > 1, the best
    of several seeded starts is returned.
    """
    config = config or EmConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if config.n_starts > 1:
        best: H3mFit | None = None
        for child in rng.spawn(config.n_starts):
            fit = h3m_em(data, k, n_states, n_mix, replace(config, n_starts=1), child)
            if best is None or fit.loglik_trace[-1] > best.loglik_trace[-1]:
                best = fit
        return best
    _check_data(data)
    if len(data) < k:
        raise EstimationError(f"{len(data)} sequences cannot support {k} components")
    groups = group_by_length(data)
    n_seq = len(data)

    if k == 1:
        components = [_init_hmm(data, n_states, n_mix, config, rng)]
    else:
        order = rng.permutation(n_seq)
        components = []
        for j in range(k):
            shard = [data[i] for i in order[j::k]]
            components.append(_init_hmm(shard, n_states, n_mix, config, rng))
    weights = np.full(k, 1.0 / k)

    trace: list[float] = []
    reseeds = 0
    resp = np.full((n_seq, k), 1.0 / k)
    for _ in range(config.max_iters + 1):
        ll_mat = _component_logliks(components, groups, n_seq)
        with np.errstate(divide="ignore"):
            log_resp = np.log(weights)[None, :] + ll_mat
        seq_ll = logsumexp(log_resp, axis=1)
        resp = np.exp(log_resp - seq_ll[:, None])
        trace.append(float(np.sum(seq_ll)))
        if len(trace) > 1:
            improvement = (trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-300)
            if improvement < config.tol:
                break
        if len(trace) == config.max_iters + 1:
            break

        # Rescue starved components before committing the updates.
        mass = resp.sum(axis=0)
        for j in range(k):
            if mass[j] >= n_seq / (10.0 * k) or reseeds >= 2:
                continue
            worst = int(np.argmin(seq_ll))
            try:
                components[j] = _init_hmm([data[worst]], n_states, n_mix, config, rng)
            except EstimationError:
                components[j] = _init_hmm(data, n_states, n_mix, config, rng)
            resp[worst] = 0.0
            resp[worst, j] = 1.0
            reseeds += 1
            mass = resp.sum(axis=0)

        weights = resp.sum(axis=0) / n_seq
        new_components = []
        for j in range(k):
            total = _Stats.zeros(
                n_states, n_mix, data[0].dim, config.cov_type == "diag"
            )
            for obs, idxs in groups:
                stats, _ = _expected_stats(components[j], obs, resp[idxs, j])
                total.add(stats)
            new_components.append(_mstep(total, components[j], config.cov_floor))
        components = new_components

    return H3mFit(
        model=H3m(weights, components),
        posteriors=resp,
        loglik_trace=trace,
        reseeds=reseeds,
    )
