"""Seeded synthetic benchmarks with known group structure.

Groups are laid out along the first observation dimension: group g's
prototype is centered at (g - (G-1)/2) * separation, states and mixture
components spread around that center at separation/4 and separation/8. Group
members perturb the prototype's means with Gaussian noise of scale
separation/20 and its stochastic rows with a Dirichlet jitter.
"""

from __future__ import annotations

import numpy as np

from .gaussians import Gaussian, GaussianMixture
from .hmm import Hmm, Sequence, sample_batch
from .serialize import SequenceDataset


def _prototype(
    offset: float,
    n_states: int,
    n_mix: int,
    dim: int,
    separation: float,
    cov_type: str,
) -> Hmm:
    initial = np.full(n_states, 1.0 / n_states)
    if n_states == 1:
        transitions = np.ones((1, 1))
    else:
        transitions = np.full((n_states, n_states), 0.2 / (n_states - 1))
        np.fill_diagonal(transitions, 0.8)
    emissions = []
    for s in range(n_states):
        comps = []
        for m in range(n_mix):
            mean = np.zeros(dim)
            mean[0] = (
                offset
                + (s - (n_states - 1) / 2.0) * separation / 4.0
                + (m - (n_mix - 1) / 2.0) * separation / 8.0
            )
            cov = np.ones(dim) if cov_type == "diag" else np.eye(dim)
            comps.append(Gaussian(mean, cov))
        emissions.append(GaussianMixture(np.full(n_mix, 1.0 / n_mix), comps))
    return Hmm(initial, transitions, emissions)


def _perturb_member(proto: Hmm, noise: float, rng: np.random.Generator) -> Hmm:
    concentration = 100.0
    initial = rng.dirichlet(concentration * proto.initial + 1e-9)
    transitions = np.stack(
        [rng.dirichlet(concentration * row + 1e-9) for row in proto.transitions]
    )
    emissions = []
    for gmm in proto.emissions:
        comps = [
            Gaussian(c.mean + rng.normal(0.0, noise, size=c.mean.shape), c.cov.copy())
            for c in gmm.components
        ]
        emissions.append(GaussianMixture(gmm.weights.copy(), comps))
    return Hmm(initial, transitions, emissions)


def synth_benchmark(
    n_groups: int,
    per_group: int,
    separation: float,
    rng: np.random.Generator,
    n_states: int = 2,
    n_mix: int = 1,
    dim: int = 1,
    tau: int = 20,
    cov_type: str = "diag",
    kind: str = "hmms",
) -> tuple[list[Hmm], np.ndarray] | tuple[SequenceDataset, np.ndarray]:
    """Generate group-structured HMMs or sequences plus ground-truth labels.

    kind "hmms" returns per_group member HMMs per group; kind "sequences"
    draws one length-tau sequence from each member instead.
    """
    if n_groups < 2:
        raise ValueError("need at least two groups")
    if per_group < 1:
        raise ValueError("per_group must be >= 1")
    if kind not in ("hmms", "sequences"):
        raise ValueError(f"unknown kind {kind!r}")
    members: list[Hmm] = []
    labels: list[int] = []
    noise = separation / 20.0
    for g in range(n_groups):
        offset = (g - (n_groups - 1) / 2.0) * separation
        proto = _prototype(offset, n_states, n_mix, dim, separation, cov_type)
        for _ in range(per_group):
            members.append(_perturb_member(proto, noise, rng))
            labels.append(g)
    label_arr = np.array(labels, dtype=int)
    if kind == "hmms":
        return members, label_arr
    sequences = []
    for idx, member in enumerate(members):
        obs, _ = sample_batch(member, tau, 1, rng)
        sequences.append(Sequence(obs[0], id=f"seq{idx:04d}"))
    dataset = SequenceDataset(sequences, [str(g) for g in labels])
    return dataset, label_arr
