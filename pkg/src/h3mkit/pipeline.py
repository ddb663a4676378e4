"""Large-data estimation by splitting: fit an HMM mixture on each data
portion independently, pool the intermediate mixtures, and reduce the pool
to the final model. Only one portion's sequences are needed in memory at a
time, and portions can be processed by independent workers."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EstimationError
from .h3m import H3m, h3m_em
from .hmm import EmConfig, Sequence
from .reduction import ReductionResult, VhemConfig, vhem_reduce


@dataclass
class PipelineReport:
    portion_sizes: list[int]
    portion_logliks: list[float]
    pooled_k: int
    bound_history: list[float]
    effective_k: int


def split_estimate_aggregate(
    data: list[Sequence],
    n_portions: int,
    per_portion_k: int,
    final_k: int,
    n_states: int,
    n_mix: int,
    em_config: EmConfig | None = None,
    vhem_config: VhemConfig | None = None,
    seed: int = 0,
) -> tuple[H3m, PipelineReport]:
    """Partition ``data`` into contiguous portions, fit a per-portion mixture,
    pool the intermediate mixtures with weights proportional to portion size
    times intermediate component weight, and reduce the pool to ``final_k``
    components. Deterministic given ``seed``."""
    if n_portions < 1:
        raise ValueError("n_portions must be >= 1")
    em_config = em_config or EmConfig()
    boundaries = np.array_split(np.arange(len(data)), n_portions)
    for p, idxs in enumerate(boundaries):
        if len(idxs) < per_portion_k:
            raise EstimationError(
                f"portion {p} has {len(idxs)} sequences, fewer than k={per_portion_k}"
            )

    pooled_components = []
    pooled_weights = []
    portion_sizes = []
    portion_logliks = []
    for p, idxs in enumerate(boundaries):
        portion = [data[i] for i in idxs]
        fit = h3m_em(
            portion,
            per_portion_k,
            n_states,
            n_mix,
            em_config,
            np.random.default_rng(seed + p),
        )
        portion_sizes.append(len(portion))
        portion_logliks.append(fit.loglik_trace[-1])
        pooled_components.extend(fit.model.components)
        pooled_weights.extend(len(portion) * fit.model.weights)
    weights = np.asarray(pooled_weights)
    pooled = H3m(weights / weights.sum(), pooled_components)

    if vhem_config is None:
        vhem_config = VhemConfig(k_reduced=final_k, seed=seed)
    else:
        vhem_config = replace(vhem_config, k_reduced=final_k)
    result: ReductionResult = vhem_reduce(pooled, vhem_config)
    report = PipelineReport(
        portion_sizes=portion_sizes,
        portion_logliks=portion_logliks,
        pooled_k=pooled.n_components,
        bound_history=result.bound_history,
        effective_k=result.effective_k,
    )
    return result.reduced, report
