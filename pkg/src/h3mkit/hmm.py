"""Hidden Markov models with Gaussian-mixture emissions.

Holds the model type, exact sequence likelihood via a log-domain forward
recursion, seeded sampling, prior state-occupancy marginals, and
maximum-likelihood estimation (Baum-Welch). The expectation machinery is
shared with the mixture-of-HMMs estimator, which reuses the same
sufficient-statistic and update routines with per-sequence weights.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import EstimationError, InvalidModelError
from .gaussians import Gaussian, GaussianMixture, check_probability_vector


@dataclass
class Sequence:
    """One observation sequence: a (tau, d) array of real vectors."""

    observations: np.ndarray
    id: str | None = None

    def __post_init__(self) -> None:
        self.observations = np.asarray(self.observations, dtype=float)
        if self.observations.ndim != 2:
            raise InvalidModelError(
                f"observations must be (tau, d), got shape {self.observations.shape}"
            )
        if self.observations.shape[0] < 1:
            raise InvalidModelError("sequence must contain at least one observation")
        if not np.all(np.isfinite(self.observations)):
            raise InvalidModelError("observations contain non-finite values")

    @property
    def length(self) -> int:
        return self.observations.shape[0]

    @property
    def dim(self) -> int:
        return self.observations.shape[1]


@dataclass
class Hmm:
    """HMM with an initial distribution, transition matrix, and per-state
    Gaussian-mixture emissions sharing one component count and dimension."""

    initial: np.ndarray
    transitions: np.ndarray
    emissions: list[GaussianMixture]

    def __post_init__(self) -> None:
        self.initial = np.asarray(self.initial, dtype=float)
        self.transitions = np.asarray(self.transitions, dtype=float)
        n = self.initial.shape[0] if self.initial.ndim == 1 else -1
        if self.initial.ndim != 1:
            raise InvalidModelError("initial must be a vector")
        if self.transitions.shape != (n, n):
            raise InvalidModelError(
                f"transitions must be ({n}, {n}), got {self.transitions.shape}"
            )
        check_probability_vector(self.initial, "initial distribution")
        for row_idx in range(n):
            check_probability_vector(
                self.transitions[row_idx], f"transition row {row_idx}"
            )
        if len(self.emissions) != n:
            raise InvalidModelError(
                f"{len(self.emissions)} emission mixtures for {n} states"
            )
        m = self.emissions[0].n_components
        d = self.emissions[0].dim
        for state, gmm in enumerate(self.emissions):
            if gmm.n_components != m or gmm.dim != d:
                raise InvalidModelError(
                    f"emission for state {state} has (M={gmm.n_components}, d={gmm.dim}),"
                    f" expected (M={m}, d={d})"
                )

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def n_mix(self) -> int:
        return self.emissions[0].n_components

    @property
    def dim(self) -> int:
        return self.emissions[0].dim


@dataclass
class EmConfig:
    """Stopping and regularization knobs for the EM estimators.

    ``n_starts`` > 1 runs that many independently seeded fits and keeps the
    one with the best final log-likelihood (still deterministic given the
    caller's generator)."""

    max_iters: int = 100
    tol: float = 1e-6
    cov_floor: float = 1e-6
    cov_type: str = "diag"  # "diag" | "full"
    n_starts: int = 1

    def __post_init__(self) -> None:
        if self.cov_type not in ("diag", "full"):
            raise ValueError(f"cov_type must be 'diag' or 'full', got {self.cov_type!r}")
        if self.max_iters < 1 or self.tol < 0 or self.cov_floor <= 0 or self.n_starts < 1:
            raise ValueError(
                "max_iters >= 1, tol >= 0, cov_floor > 0 and n_starts >= 1 required"
            )


@dataclass
class HmmFit:
    """Fitted model plus the per-iteration total log-likelihood trace."""

    model: Hmm
    loglik_trace: list[float]

    @property
    def n_iters(self) -> int:
        return len(self.loglik_trace) - 1


# ---------------------------------------------------------------------------
# Likelihood


def _check_dim(model: Hmm, dim: int) -> None:
    if model.dim != dim:
        raise InvalidModelError(
            f"observation dimension {dim} does not match model dimension {model.dim}"
        )


def _log_mixture_params(model: Hmm):
    """Stacked emission parameters: log weights (N, M), means (N, M, d) and
    either sqrt-variances (N, M, d) for diagonal or Cholesky factors
    (N, M, d, d) for full covariances."""
    weights = np.stack([g.weights for g in model.emissions])
    with np.errstate(divide="ignore"):
        log_c = np.log(weights)
    means = np.stack([[comp.mean for comp in g.components] for g in model.emissions])
    diagonal = model.emissions[0].is_diagonal
    if diagonal:
        scale = np.sqrt(
            np.stack([[comp.cov for comp in g.components] for g in model.emissions])
        )
    else:
        scale = np.stack(
            [[np.linalg.cholesky(comp.cov) for comp in g.components] for g in model.emissions]
        )
    return log_c, means, scale, diagonal


def _log_component_densities(model: Hmm, obs: np.ndarray) -> np.ndarray:
    """Per state and mixture component log densities, shape (S, tau, N, M)."""
    n, m, d = model.n_states, model.n_mix, model.dim
    diff_shape_obs = obs[:, :, None, None, :]  # (S, tau, 1, 1, d)
    _, means, scale, diagonal = _log_mixture_params(model)
    log_2pi = np.log(2.0 * np.pi)
    if diagonal:
        var = scale**2
        log_det = np.sum(np.log(var), axis=-1)  # (N, M)
        diff = diff_shape_obs - means[None, None]
        maha = np.sum(diff * diff / var[None, None], axis=-1)
    else:
        log_det = 2.0 * np.sum(
            np.log(np.diagonal(scale, axis1=-2, axis2=-1)), axis=-1
        )  # (N, M)
        diff = diff_shape_obs - means[None, None]  # (S, tau, N, M, d)
        maha = np.empty(diff.shape[:-1])
        for state in range(n):
            for comp in range(m):
                sol = np.linalg.solve(scale[state, comp], diff[:, :, state, comp, :, None])
                maha[:, :, state, comp] = np.sum(sol[..., 0] ** 2, axis=-1)
    return -0.5 * (d * log_2pi + log_det[None, None] + maha)


def _log_emissions(model: Hmm, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log emission densities (S, tau, N) and the per-component log joint
    weights+densities (S, tau, N, M) they were reduced from."""
    log_comp = _log_component_densities(model, obs)
    log_c, *_ = _log_mixture_params(model)
    log_joint = log_comp + log_c[None, None]
    return logsumexp(log_joint, axis=-1), log_joint


def _forward(log_pi: np.ndarray, log_a: np.ndarray, log_b: np.ndarray) -> np.ndarray:
    """Log-likelihoods (S,) via forward recursion with per-step log
    normalization, for a batch of equal-length sequences."""
    tau = log_b.shape[1]
    alpha = log_pi[None, :] + log_b[:, 0]
    ll = logsumexp(alpha, axis=1)
    alpha = alpha - ll[:, None]
    for t in range(1, tau):
        alpha = logsumexp(alpha[:, :, None] + log_a[None], axis=1) + log_b[:, t]
        step = logsumexp(alpha, axis=1)
        ll = ll + step
        alpha = alpha - step[:, None]
    return ll


def forward_loglik(model: Hmm, seq: Sequence) -> float:
    """Exact log p(sequence | model)."""
    _check_dim(model, seq.dim)
    return float(forward_loglik_batch(model, seq.observations[None])[0])


def forward_loglik_batch(model: Hmm, obs: np.ndarray) -> np.ndarray:
    """Log-likelihood of each sequence in an (S, tau, d) batch."""
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 3:
        raise InvalidModelError(f"batch must be (S, tau, d), got shape {obs.shape}")
    _check_dim(model, obs.shape[2])
    log_b, _ = _log_emissions(model, obs)
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial)
        log_a = np.log(model.transitions)
    return _forward(log_pi, log_a, log_b)


def state_marginals(model: Hmm, tau: int) -> np.ndarray:
    """Prior state-occupancy P(x_t = state) for t = 1..tau, shape (tau, N)."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    rows = np.empty((tau, model.n_states))
    rows[0] = model.initial
    for t in range(1, tau):
        rows[t] = rows[t - 1] @ model.transitions
    return rows


# ---------------------------------------------------------------------------
# Sampling


def _categorical_rows(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index drawn per row from inclusive-cumsum probability rows."""
    idx = np.sum(u[..., None] >= cum_rows, axis=-1)
    return np.minimum(idx, cum_rows.shape[-1] - 1)


def sample_batch(
    model: Hmm, tau: int, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` sequences of length ``tau``; returns (obs, states) with
    shapes (size, tau, d) and (size, tau). Deterministic given the generator."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    n, m, d = model.n_states, model.n_mix, model.dim
    states = np.empty((size, tau), dtype=int)
    cum_pi = np.cumsum(model.initial)
    cum_a = np.cumsum(model.transitions, axis=1)
    states[:, 0] = _categorical_rows(cum_pi[None, :], rng.random(size))
    for t in range(1, tau):
        states[:, t] = _categorical_rows(cum_a[states[:, t - 1]], rng.random(size))
    weights = np.stack([g.weights for g in model.emissions])
    cum_c = np.cumsum(weights, axis=1)
    comps = _categorical_rows(cum_c[states], rng.random((size, tau)))
    normals = rng.standard_normal((size, tau, d))
    means = np.stack([[comp.mean for comp in g.components] for g in model.emissions])
    if model.emissions[0].is_diagonal:
        sd = np.sqrt(np.stack([[comp.cov for comp in g.components] for g in model.emissions]))
        obs = means[states, comps] + normals * sd[states, comps]
    else:
        chol = np.stack(
            [[np.linalg.cholesky(comp.cov) for comp in g.components] for g in model.emissions]
        )
        obs = means[states, comps] + np.einsum("stij,stj->sti", chol[states, comps], normals)
    return obs, states


def sample(model: Hmm, tau: int, rng: np.random.Generator) -> tuple[Sequence, np.ndarray]:
    """Draw one sequence and its hidden state path."""
    obs, states = sample_batch(model, tau, 1, rng)
    return Sequence(obs[0]), states[0]


# ---------------------------------------------------------------------------
# Expected sufficient statistics (shared by baum_welch and the mixture EM)


@dataclass
class _Stats:
    """Weighted expected counts accumulated over sequences."""

    pi: np.ndarray  # (N,)
    trans: np.ndarray  # (N, N)
    mix: np.ndarray  # (N, M)
    mean: np.ndarray  # (N, M, d)
    sq: np.ndarray  # (N, M, d) diagonal second moments or (N, M, d, d) outer

    @classmethod
    def zeros(cls, n: int, m: int, d: int, diagonal: bool) -> "_Stats":
        sq_shape = (n, m, d) if diagonal else (n, m, d, d)
        return cls(
            pi=np.zeros(n),
            trans=np.zeros((n, n)),
            mix=np.zeros((n, m)),
            mean=np.zeros((n, m, d)),
            sq=np.zeros(sq_shape),
        )

    def add(self, other: "_Stats") -> None:
        self.pi += other.pi
        self.trans += other.trans
        self.mix += other.mix
        self.mean += other.mean
        self.sq += other.sq


def _expected_stats(
    model: Hmm, obs: np.ndarray, weights: np.ndarray
) -> tuple[_Stats, np.ndarray]:
    """Forward-backward pass over an equal-length batch.

    Returns the per-sequence-weighted sufficient statistics and the
    (unweighted) per-sequence log-likelihoods.
    """
    s_count, tau, d = obs.shape
    n, m = model.n_states, model.n_mix
    diagonal = model.emissions[0].is_diagonal
    log_b, log_joint = _log_emissions(model, obs)
    with np.errstate(divide="ignore"):
        log_pi = np.log(model.initial)
        log_a = np.log(model.transitions)
    lls = _forward(log_pi, log_a, log_b)

    # Unnormalized log-domain alpha/beta; gamma and xi are renormalized rowwise
    # so the absolute scale never enters.
    alpha = np.empty((s_count, tau, n))
    alpha[:, 0] = log_pi[None, :] + log_b[:, 0]
    for t in range(1, tau):
        alpha[:, t] = logsumexp(alpha[:, t - 1, :, None] + log_a[None], axis=1) + log_b[:, t]
    beta = np.empty((s_count, tau, n))
    beta[:, -1] = 0.0
    for t in range(tau - 2, -1, -1):
        beta[:, t] = logsumexp(
            log_a[None] + (log_b[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2
        )

    log_gamma = alpha + beta
    log_gamma -= logsumexp(log_gamma, axis=2, keepdims=True)
    gamma = np.exp(log_gamma)  # (S, tau, N)

    # Within-state mixture responsibilities.
    log_mix = log_joint - logsumexp(log_joint, axis=3, keepdims=True)
    gamma_mix = gamma[..., None] * np.exp(log_mix)  # (S, tau, N, M)

    stats = _Stats.zeros(n, m, d, diagonal)
    stats.pi = np.einsum("s,sn->n", weights, gamma[:, 0])
    xi_sum = np.zeros((s_count, n, n))
    for t in range(tau - 1):
        log_xi = (
            alpha[:, t, :, None]
            + log_a[None]
            + (log_b[:, t + 1] + beta[:, t + 1])[:, None, :]
        )
        log_xi -= logsumexp(log_xi, axis=(1, 2), keepdims=True)
        xi_sum += np.exp(log_xi)
    stats.trans = np.einsum("s,sij->ij", weights, xi_sum)
    stats.mix = np.einsum("s,stnm->nm", weights, gamma_mix)
    stats.mean = np.einsum("s,stnm,std->nmd", weights, gamma_mix, obs)
    if diagonal:
        stats.sq = np.einsum("s,stnm,std->nmd", weights, gamma_mix, obs * obs)
    else:
        stats.sq = np.einsum("s,stnm,sti,stj->nmij", weights, gamma_mix, obs, obs)
    return stats, lls


def _make_gaussian(mean: np.ndarray, cov: np.ndarray, floor: float) -> Gaussian:
    """Build a Gaussian with the covariance floor applied to its diagonal."""
    if cov.ndim == 1:
        return Gaussian(mean, np.maximum(cov, floor))
    cov = 0.5 * (cov + cov.T)
    idx = np.arange(cov.shape[0])
    cov[idx, idx] = np.maximum(cov[idx, idx], floor)
    try:
        return Gaussian(mean, cov)
    except InvalidModelError:
        # Nearly singular off the diagonal; nudge towards a usable matrix.
        return Gaussian(mean, cov + floor * np.eye(cov.shape[0]))


def _mstep(stats: _Stats, previous: Hmm, cov_floor: float) -> Hmm:
    """Parameter updates from accumulated counts.

    Rows or components that received no mass keep their previous values: the
    objective is flat in them, so leaving them untouched preserves the
    monotone-likelihood guarantee.
    """
    n, m = previous.n_states, previous.n_mix
    initial = stats.pi / stats.pi.sum()
    transitions = previous.transitions.copy()
    for row_idx in range(n):
        total = stats.trans[row_idx].sum()
        if total > 0:
            transitions[row_idx] = stats.trans[row_idx] / total
    emissions = []
    for state in range(n):
        mass_row = stats.mix[state]
        row_total = mass_row.sum()
        if row_total <= 0:
            emissions.append(previous.emissions[state])
            continue
        weights = mass_row / row_total
        comps = []
        for comp in range(m):
            mass = mass_row[comp]
            if mass <= 1e-12:
                comps.append(previous.emissions[state].components[comp])
                continue
            mu = stats.mean[state, comp] / mass
            if stats.sq.ndim == 3:
                cov = stats.sq[state, comp] / mass - mu * mu
            else:
                cov = stats.sq[state, comp] / mass - np.outer(mu, mu)
            comps.append(_make_gaussian(mu, cov, cov_floor))
        emissions.append(GaussianMixture(weights, comps))
    return Hmm(initial, transitions, emissions)


# ---------------------------------------------------------------------------
# Initialization and fitting


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, n_iter: int = 25) -> np.ndarray:
    """Plain Lloyd iterations from k distinct seed points; deterministic
    given the generator. Returns centers sorted lexicographically."""
    unique = np.unique(points, axis=0)
    if unique.shape[0] < k:
        raise EstimationError(
            f"need at least {k} distinct observation vectors, found {unique.shape[0]}"
        )
    centers = unique[rng.choice(unique.shape[0], size=k, replace=False)]
    for _ in range(n_iter):
        d2 = np.sum((points[:, None, :] - centers[None]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = assign == j
            if np.any(mask):
                new_centers[j] = points[mask].mean(axis=0)
        if np.allclose(new_centers, centers):
            centers = new_centers
            break
        centers = new_centers
    order = np.lexsort(centers.T[::-1])
    return centers[order]


def _init_hmm(
    data: list[Sequence],
    n_states: int,
    n_mix: int,
    config: EmConfig,
    rng: np.random.Generator,
) -> Hmm:
    """Seeded starting point: emission means from pooled k-means, uniform
    initial/transition rows with a small Dirichlet jitter."""
    pooled = np.concatenate([seq.observations for seq in data], axis=0)
    d = pooled.shape[1]
    centers = _kmeans(pooled, n_states * n_mix, rng)
    var = np.maximum(pooled.var(axis=0), config.cov_floor)
    initial = rng.dirichlet(np.full(n_states, 200.0))
    transitions = np.stack([rng.dirichlet(np.full(n_states, 200.0)) for _ in range(n_states)])
    emissions = []
    for state in range(n_states):
        comps = []
        for comp in range(n_mix):
            mu = centers[state * n_mix + comp]
            cov = var.copy() if config.cov_type == "diag" else np.diag(var)
            comps.append(Gaussian(mu, cov))
        emissions.append(GaussianMixture(np.full(n_mix, 1.0 / n_mix), comps))
    return Hmm(initial, transitions, emissions)


def group_by_length(data: list[Sequence]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Batch sequences of equal length: list of (obs (S, tau, d), indices)."""
    lengths: dict[int, list[int]] = {}
    for idx, seq in enumerate(data):
        lengths.setdefault(seq.length, []).append(idx)
    groups = []
    for tau in sorted(lengths):
        idxs = np.array(lengths[tau], dtype=int)
        obs = np.stack([data[i].observations for i in idxs])
        groups.append((obs, idxs))
    return groups


def _check_data(data: list[Sequence]) -> int:
    if not data:
        raise EstimationError("no sequences provided")
    d = data[0].dim
    for seq in data:
        if seq.dim != d:
            raise InvalidModelError("sequences have inconsistent dimensions")
    return d


def baum_welch(
    data: list[Sequence],
    n_states: int,
    n_mix: int,
    config: EmConfig | None = None,
    rng: np.random.Generator | None = None,
) -> HmmFit:
    """Maximum-likelihood HMM estimation.

    The total log-likelihood is non-decreasing across iterations; stops when
    the relative improvement drops below config.tol or at config.max_iters.
    With config.n_starts > 1, the best of several seeded starts is returned.
    """
    config = config or EmConfig()
    rng = rng if rng is not None else np.random.default_rng()
    if config.n_starts > 1:
        best: HmmFit | None = None
        for child in rng.spawn(config.n_starts):
            fit = baum_welch(data, n_states, n_mix, replace(config, n_starts=1), child)
            if best is None or fit.loglik_trace[-1] > best.loglik_trace[-1]:
                best = fit
        return best
    _check_data(data)
    groups = group_by_length(data)
    model = _init_hmm(data, n_states, n_mix, config, rng)
    trace: list[float] = []
    all_lls = np.empty(len(data))
    for _ in range(config.max_iters + 1):
        total = _Stats.zeros(n_states, n_mix, model.dim, config.cov_type == "diag")
        for obs, idxs in groups:
            stats, lls = _expected_stats(model, obs, np.ones(obs.shape[0]))
            total.add(stats)
            all_lls[idxs] = lls
        trace.append(float(np.sum(all_lls)))
        if len(trace) > 1:
            improvement = (trace[-1] - trace[-2]) / max(abs(trace[-2]), 1e-300)
            if improvement < config.tol:
                break
        if len(trace) == config.max_iters + 1:
            break
        model = _mstep(total, model, config.cov_floor)
    return HmmFit(model=model, loglik_trace=trace)
