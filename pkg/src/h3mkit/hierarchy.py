"""Hierarchical clustering of HMM collections by repeated mixture reduction,
plus partition-quality metrics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidModelError
from .h3m import H3m
from .hmm import Hmm
from .reduction import AssignmentMatrix, VhemConfig, vhem_reduce


@dataclass
class HierarchyLevel:
    """One rung of the tree: the mixture at this level, the component count,
    and for levels above the leaves a total map from previous-level component
    index to this level's component index."""

    models: H3m
    parent_of: dict[int, int]
    level_size: int


def hier_cluster(
    leaves: list[Hmm], ladder: list[int], config: VhemConfig
) -> list[HierarchyLevel]:
    """Build a tree over ``leaves`` by reducing level by level.

    Level 0 wraps the leaves with uniform weights; each entry of ``ladder``
    produces the next level by reduction, with parents taken from the hard
    assignment labels. ``config.seed`` is advanced by one per level so the
    whole tree is deterministic from one seed.
    """
    if not leaves:
        raise InvalidModelError("no leaves to cluster")
    if not ladder or any(k < 1 for k in ladder):
        raise ValueError("ladder must be a non-empty list of counts >= 1")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError(f"ladder must decrease strictly: {ladder}")
    if ladder[0] > len(leaves):
        raise ValueError(f"ladder[0]={ladder[0]} exceeds leaf count {len(leaves)}")

    current = H3m(np.full(len(leaves), 1.0 / len(leaves)), leaves)
    levels = [
        HierarchyLevel(
            models=current,
            parent_of={i: i for i in range(len(leaves))},
            level_size=len(leaves),
        )
    ]
    for depth, k in enumerate(ladder):
        level_config = replace(
            config, k_reduced=k, seed=config.seed + depth, init_model=None,
            init_strategy=config.init_strategy
            if config.init_strategy != "provided"
            else "subset-perturb",
        )
        result = vhem_reduce(current, level_config)
        parent_of = {
            i: int(result.hard_labels[i]) for i in range(current.n_components)
        }
        current = result.reduced
        levels.append(HierarchyLevel(models=current, parent_of=parent_of, level_size=k))
    return levels


def leaf_labels(levels: list[HierarchyLevel], level_index: int) -> list[int]:
    """Cluster label of each leaf at the given level, by composing the
    parent maps down the tree."""
    if not 0 <= level_index < len(levels):
        raise IndexError(f"level {level_index} out of range")
    labels = list(range(levels[0].level_size))
    for level in levels[1 : level_index + 1]:
        labels = [level.parent_of[lab] for lab in labels]
    return labels


def assign_labels(z: AssignmentMatrix) -> list[int]:
    """Hard labels from a soft assignment: argmax per row, ties to the
    lowest index."""
    return [int(lab) for lab in np.argmax(z.z, axis=1)]


def rand_index(labels_a: list, labels_b: list) -> float:
    """Fraction of item pairs on which two partitions agree (both together or
    both apart), over all unordered pairs. Symmetric and invariant under
    relabeling of either argument."""
    if len(labels_a) != len(labels_b):
        raise ValueError(
            f"label lists have different lengths: {len(labels_a)} vs {len(labels_b)}"
        )
    n = len(labels_a)
    if n < 2:
        raise ValueError("need at least two items")
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    same_a = a[:, None] == a[None, :]
    same_b = b[:, None] == b[None, :]
    upper = np.triu_indices(n, k=1)
    return float(np.mean(same_a[upper] == same_b[upper]))


def best_label_accuracy(labels_true: list, labels_pred: list) -> float:
    """Classification accuracy maximized over relabelings of the prediction.

    Intended for small label sets (exhaustive over permutations).
    """
    if len(labels_true) != len(labels_pred):
        raise ValueError("label lists have different lengths")
    true = np.asarray(labels_true)
    pred = np.asarray(labels_pred)
    true_values = sorted(set(true.tolist()))
    pred_values = sorted(set(pred.tolist()))
    if len(pred_values) > 8:
        raise ValueError("too many predicted labels for exhaustive matching")
    targets = true_values + [None] * max(0, len(pred_values) - len(true_values))
    best = 0.0
    for perm in itertools.permutations(targets, len(pred_values)):
        mapping = dict(zip(pred_values, perm))
        mapped = np.array([mapping[p] for p in pred.tolist()], dtype=object)
        best = max(best, float(np.mean(mapped == true)))
    return best
