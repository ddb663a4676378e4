"""Hidden Markov mixture models: estimation, reduction, and clustering.

The package covers the full path from raw sequences to a hierarchy of HMM
cluster centers: Gaussian-mixture primitives, HMMs with exact likelihood and
Baum-Welch estimation, mixtures of HMMs with sequence-level EM, variational
reduction of a large mixture to a small one, hierarchical clustering by
repeated reduction, and serialization plus a CLI around it all.
"""

from .errors import (
    DegenerateWeightsError,
    EstimationError,
    H3mError,
    InvalidModelError,
    ModelFormatError,
)
from .gaussians import (
    EmissionResponsibility,
    Gaussian,
    GaussianMixture,
    gauss_expected_loglik,
    gmm_expected_loglik_bound,
    gmm_expected_loglik_opt,
    gmm_responsibilities,
    solve_softmax_log,
    solve_weighted_log,
)
from .h3m import (
    H3m,
    H3mFit,
    h3m_em,
    h3m_loglik,
    h3m_loglik_batch,
    h3m_sample,
    mc_expected_loglik,
)
from .hierarchy import (
    HierarchyLevel,
    assign_labels,
    best_label_accuracy,
    hier_cluster,
    leaf_labels,
    rand_index,
)
from .hmm import (
    EmConfig,
    Hmm,
    HmmFit,
    Sequence,
    baum_welch,
    forward_loglik,
    forward_loglik_batch,
    sample,
    sample_batch,
    state_marginals,
)
from .pipeline import PipelineReport, split_estimate_aggregate
from .reduction import (
    AssignmentMatrix,
    PairEstepResult,
    ReductionResult,
    SummaryStats,
    VhemConfig,
    compute_assignments,
    elhmm_bruteforce,
    estep_pair,
    lower_bound,
    mstep,
    summary_stats,
    vhem_reduce,
)
from .serialize import SequenceDataset, load_dataset, load_model, save_dataset, save_model
from .synth import synth_benchmark

__version__ = "0.1.0"

__all__ = [
    "AssignmentMatrix",
    "DegenerateWeightsError",
    "EmConfig",
    "EmissionResponsibility",
    "EstimationError",
    "Gaussian",
    "GaussianMixture",
    "H3m",
    "H3mError",
    "H3mFit",
    "HierarchyLevel",
    "Hmm",
    "HmmFit",
    "InvalidModelError",
    "ModelFormatError",
    "PairEstepResult",
    "PipelineReport",
    "ReductionResult",
    "Sequence",
    "SequenceDataset",
    "SummaryStats",
    "VhemConfig",
    "assign_labels",
    "baum_welch",
    "best_label_accuracy",
    "compute_assignments",
    "elhmm_bruteforce",
    "estep_pair",
    "forward_loglik",
    "forward_loglik_batch",
    "gauss_expected_loglik",
    "gmm_expected_loglik_bound",
    "gmm_expected_loglik_opt",
    "gmm_responsibilities",
    "h3m_em",
    "h3m_loglik",
    "h3m_loglik_batch",
    "h3m_sample",
    "hier_cluster",
    "leaf_labels",
    "load_dataset",
    "load_model",
    "lower_bound",
    "mc_expected_loglik",
    "mstep",
    "rand_index",
    "sample",
    "sample_batch",
    "save_dataset",
    "save_model",
    "solve_softmax_log",
    "solve_weighted_log",
    "split_estimate_aggregate",
    "state_marginals",
    "summary_stats",
    "synth_benchmark",
    "vhem_reduce",
]
