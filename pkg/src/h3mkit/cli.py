"""Command-line surface.

Every command is a thin wrapper over the library: it loads inputs, runs one
operation, and writes machine-readable CSV reports (traces, assignments)
next to a human-readable log. Timings go to their own CSV so that all other
report files are byte-identical across runs with the same inputs and seeds.
Options can be overridden with environment variables prefixed H3MKIT_.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import csv
import functools
import sys
import time
from pathlib import Path

import click
import numpy as np

from .errors import (
    DegenerateWeightsError,
    EstimationError,
    InvalidModelError,
    ModelFormatError,
)
from .h3m import H3m, h3m_em, mc_expected_loglik
from .hierarchy import hier_cluster, leaf_labels, rand_index
from .hmm import EmConfig, Hmm, baum_welch
from .pipeline import split_estimate_aggregate
from .reduction import VhemConfig, vhem_reduce
from .serialize import load_dataset, load_model, save_dataset, save_model
from .synth import synth_benchmark

_VALIDATION_ERRORS = (InvalidModelError, ModelFormatError, DegenerateWeightsError, ValueError)
_NUMERICAL_ERRORS = (EstimationError, FloatingPointError, np.linalg.LinAlgError)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _VALIDATION_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except _NUMERICAL_ERRORS as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _common_options(fn):
    for option in reversed(
        [
            click.option("--seed", type=int, default=0, show_default=True),
            click.option("--max-iters", type=int, default=100, show_default=True),
            click.option("--tol", type=float, default=1e-6, show_default=True),
            click.option("--cov-floor", type=float, default=1e-6, show_default=True),
            click.option(
                "--cov-type",
                type=click.Choice(["diag", "full"]),
                default="diag",
                show_default=True,
            ),
        ]
    ):
        fn = option(fn)
    return fn


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_trace(path: Path, name: str, values: list[float]) -> None:
    _write_csv(path, ["iteration", name], [[i, v] for i, v in enumerate(values)])


def _write_timings(path: Path, entries: list[tuple[str, float]]) -> None:
    _write_csv(path, ["step", "seconds"], [[n, t] for n, t in entries])


def _write_log(path: Path, lines: list[str]) -> None:
    path.write_text("".join(line + "\n" for line in lines))
    for line in lines:
        click.echo(line)


def _write_labels(path: Path, labels) -> None:
    _write_csv(path, ["index", "label"], [[i, lab] for i, lab in enumerate(labels)])


def _read_labels(path: str) -> list[str]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "label" not in reader.fieldnames:
            raise ModelFormatError(f"{path}: expected a CSV with a 'label' column")
        return [row["label"] for row in reader]


@click.group(context_settings={"auto_envvar_prefix": "H3MKIT"})
def main() -> None:
    """Estimate, reduce, and cluster hidden Markov mixture models."""


@main.command("train-hmm")
@click.option("--data", required=True, help="Dataset file (one JSON record per line).")
@click.option("--states", type=int, required=True, help="Number of hidden states.")
@click.option("--mix", type=int, default=1, show_default=True, help="Emission components per state.")
@click.option("--starts", type=int, default=1, show_default=True, help="Seeded starts; best kept.")
@click.option("--out", default=".", show_default=True, help="Output directory.")
@_common_options
@_guarded
def train_hmm(data, states, mix, starts, out, seed, max_iters, tol, cov_floor, cov_type):
    """Fit a single HMM to a dataset by maximum likelihood."""
    out_path = _out_dir(out)
    dataset = load_dataset(data)
    config = EmConfig(
        max_iters=max_iters, tol=tol, cov_floor=cov_floor, cov_type=cov_type,
        n_starts=starts,
    )
    start = time.perf_counter()
    fit = baum_welch(dataset.sequences, states, mix, config, np.random.default_rng(seed))
    elapsed = time.perf_counter() - start
    save_model(fit.model, out_path / "hmm.json", seed=seed)
    _write_trace(out_path / "train_hmm_trace.csv", "loglik", fit.loglik_trace)
    _write_timings(out_path / "train_hmm_timings.csv", [("fit", elapsed)])
    _write_log(
        out_path / "train_hmm.log",
        [
            f"sequences={len(dataset)} states={states} mix={mix} seed={seed}",
            f"iterations={fit.n_iters} final_loglik={fit.loglik_trace[-1]!r}",
            f"model written to {out_path / 'hmm.json'}",
        ],
    )


@main.command("train-h3m")
@click.option("--data", required=True)
@click.option("--k", type=int, required=True, help="Number of mixture components.")
@click.option("--states", type=int, required=True)
@click.option("--mix", type=int, default=1, show_default=True)
@click.option("--starts", type=int, default=1, show_default=True, help="Seeded starts; best kept.")
@click.option("--out", default=".", show_default=True)
@_common_options
@_guarded
def train_h3m(data, k, states, mix, starts, out, seed, max_iters, tol, cov_floor, cov_type):
    """Fit a K-component HMM mixture to a dataset."""
    out_path = _out_dir(out)
    dataset = load_dataset(data)
    config = EmConfig(
        max_iters=max_iters, tol=tol, cov_floor=cov_floor, cov_type=cov_type,
        n_starts=starts,
    )
    start = time.perf_counter()
    fit = h3m_em(dataset.sequences, k, states, mix, config, np.random.default_rng(seed))
    elapsed = time.perf_counter() - start
    save_model(fit.model, out_path / "h3m.json", seed=seed)
    _write_trace(out_path / "train_h3m_trace.csv", "loglik", fit.loglik_trace)
    header = ["index", "id", "hard_label"] + [f"posterior_{j}" for j in range(k)]
    rows = [
        [i, seq.id or str(i), int(fit.hard_labels[i])] + [float(p) for p in fit.posteriors[i]]
        for i, seq in enumerate(dataset.sequences)
    ]
    _write_csv(out_path / "train_h3m_assignments.csv", header, rows)
    _write_timings(out_path / "train_h3m_timings.csv", [("fit", elapsed)])
    _write_log(
        out_path / "train_h3m.log",
        [
            f"sequences={len(dataset)} k={k} states={states} mix={mix} seed={seed}",
            f"iterations={fit.n_iters} reseeds={fit.reseeds}"
            f" final_loglik={fit.loglik_trace[-1]!r}",
            f"model written to {out_path / 'h3m.json'}",
        ],
    )


@main.command("reduce")
@click.option("--model", required=True, help="Input mixture model file.")
@click.option("--kr", type=int, required=True, help="Number of reduced components.")
@click.option("--virtual-samples", type=int, default=None, help="Total virtual sample mass.")
@click.option("--tau-virtual", type=int, default=10, show_default=True)
@click.option(
    "--init",
    type=click.Choice(["subset-perturb", "random", "file"]),
    default="subset-perturb",
    show_default=True,
)
@click.option("--init-file", default=None, help="Model file for --init file.")
@click.option("--restarts", type=int, default=1, show_default=True, help="Competing runs; best bound kept.")
@click.option("--out", default=".", show_default=True)
@_common_options
@_guarded
def reduce_cmd(
    model, kr, virtual_samples, tau_virtual, init, init_file, restarts, out,
    seed, max_iters, tol, cov_floor, cov_type,
):
    """Reduce an HMM mixture to fewer components (cluster its HMMs)."""
    out_path = _out_dir(out)
    base = load_model(model)
    if not isinstance(base, H3m):
        raise InvalidModelError(f"{model} holds a single HMM; reduce needs a mixture")
    if init == "file":
        if init_file is None:
            raise ValueError("--init file requires --init-file")
        init_model = load_model(init_file)
        if not isinstance(init_model, H3m):
            raise InvalidModelError(f"{init_file} must hold a mixture")
        strategy = "provided"
    else:
        init_model = None
        strategy = init
    config = VhemConfig(
        k_reduced=kr,
        n_virtual=virtual_samples,
        tau_virtual=tau_virtual,
        max_iters=max_iters,
        tol=tol,
        init_strategy=strategy,
        cov_floor=cov_floor,
        seed=seed,
        init_model=init_model,
        n_restarts=restarts,
    )
    start = time.perf_counter()
    result = vhem_reduce(base, config)
    elapsed = time.perf_counter() - start
    save_model(result.reduced, out_path / "reduced.json", seed=seed)
    _write_trace(out_path / "reduce_trace.csv", "bound", result.bound_history)
    header = ["base_index", "hard_label"] + [f"z_{j}" for j in range(kr)]
    rows = [
        [i, int(result.hard_labels[i])] + [float(v) for v in result.assignments.z[i]]
        for i in range(base.n_components)
    ]
    _write_csv(out_path / "reduce_assignments.csv", header, rows)
    _write_timings(out_path / "reduce_timings.csv", [("reduce", elapsed)])
    _write_log(
        out_path / "reduce.log",
        [
            f"base_components={base.n_components} kr={kr} seed={seed}",
            f"iterations={len(result.bound_history)} rescues={result.rescues}"
            f" effective_k={result.effective_k}",
            f"final_bound={result.bound_history[-1]!r}",
            f"model written to {out_path / 'reduced.json'}",
        ],
    )


@main.command("hier")
@click.option("--model", required=True, help="Mixture file whose components are the leaves.")
@click.option("--ladder", required=True, help="Comma-separated level sizes, e.g. 4,2.")
@click.option("--virtual-samples", type=int, default=None)
@click.option("--tau-virtual", type=int, default=10, show_default=True)
@click.option("--restarts", type=int, default=1, show_default=True, help="Competing runs per level; best bound kept.")
@click.option("--out", default=".", show_default=True)
@_common_options
@_guarded
def hier(model, ladder, virtual_samples, tau_virtual, restarts, out, seed, max_iters, tol, cov_floor, cov_type):
    """Hierarchically cluster the components of a mixture."""
    out_path = _out_dir(out)
    base = load_model(model)
    if not isinstance(base, H3m):
        raise InvalidModelError(f"{model} holds a single HMM; hier needs a mixture")
    try:
        sizes = [int(part) for part in ladder.split(",") if part]
    except ValueError as exc:
        raise ValueError(f"bad --ladder {ladder!r}: {exc}") from exc
    config = VhemConfig(
        k_reduced=sizes[0],
        n_virtual=virtual_samples,
        tau_virtual=tau_virtual,
        max_iters=max_iters,
        tol=tol,
        cov_floor=cov_floor,
        seed=seed,
        n_restarts=restarts,
    )
    start = time.perf_counter()
    levels = hier_cluster(list(base.components), sizes, config)
    elapsed = time.perf_counter() - start
    parent_rows = []
    label_rows = []
    for depth, level in enumerate(levels):
        if depth > 0:
            save_model(level.models, out_path / f"level{depth}_k{level.level_size}.json", seed=seed)
            for prev_idx in sorted(level.parent_of):
                parent_rows.append([depth, prev_idx, level.parent_of[prev_idx]])
        for leaf, lab in enumerate(leaf_labels(levels, depth)):
            label_rows.append([depth, leaf, lab])
    _write_csv(out_path / "hier_parents.csv", ["level", "prev_index", "parent_index"], parent_rows)
    _write_csv(out_path / "hier_leaf_labels.csv", ["level", "leaf_index", "label"], label_rows)
    _write_timings(out_path / "hier_timings.csv", [("hier", elapsed)])
    _write_log(
        out_path / "hier.log",
        [f"leaves={len(base.components)} ladder={sizes} seed={seed}"]
        + [f"level {d}: k={lvl.level_size}" for d, lvl in enumerate(levels)],
    )


@main.command("synth")
@click.option("--groups", type=int, required=True)
@click.option("--per-group", type=int, required=True)
@click.option("--separation", type=float, default=4.0, show_default=True)
@click.option("--states", type=int, default=2, show_default=True)
@click.option("--mix", type=int, default=1, show_default=True)
@click.option("--dim", type=int, default=1, show_default=True)
@click.option("--tau", type=int, default=20, show_default=True)
@click.option(
    "--kind", type=click.Choice(["hmms", "sequences"]), default="hmms", show_default=True
)
@click.option("--out", default=".", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--cov-type", type=click.Choice(["diag", "full"]), default="diag", show_default=True
)
@_guarded
def synth(groups, per_group, separation, states, mix, dim, tau, kind, out, seed, cov_type):
    """Generate a seeded group-structured benchmark."""
    out_path = _out_dir(out)
    rng = np.random.default_rng(seed)
    produced, labels = synth_benchmark(
        groups, per_group, separation, rng,
        n_states=states, n_mix=mix, dim=dim, tau=tau, cov_type=cov_type, kind=kind,
    )
    if kind == "hmms":
        mixture = H3m(np.full(len(produced), 1.0 / len(produced)), produced)
        save_model(mixture, out_path / "leaves.json", seed=seed)
        target = out_path / "leaves.json"
    else:
        save_dataset(produced, out_path / "dataset.jsonl")
        target = out_path / "dataset.jsonl"
    _write_labels(out_path / "synth_labels.csv", labels)
    _write_log(
        out_path / "synth.log",
        [
            f"groups={groups} per_group={per_group} separation={separation}"
            f" kind={kind} seed={seed}",
            f"written to {target}",
        ],
    )


@main.command("eval-rand")
@click.option("--labels-a", required=True, help="CSV with a 'label' column.")
@click.option("--labels-b", required=True, help="CSV with a 'label' column.")
@click.option("--out", default=".", show_default=True)
@_guarded
def eval_rand(labels_a, labels_b, out):
    """Rand index between two labelings."""
    out_path = _out_dir(out)
    a = _read_labels(labels_a)
    b = _read_labels(labels_b)
    value = rand_index(a, b)
    _write_csv(out_path / "rand.csv", ["rand_index"], [[value]])
    click.echo(f"rand_index={value!r}")


@main.command("mc-oracle")
@click.option("--base", "base_path", required=True, help="HMM file to sample from.")
@click.option("--reduced", "reduced_path", required=True, help="HMM file to score.")
@click.option("--tau", type=int, default=10, show_default=True)
@click.option("--samples", type=int, default=100000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default=".", show_default=True)
@_guarded
def mc_oracle(base_path, reduced_path, tau, samples, seed, out):
    """Monte Carlo estimate of the expected log-likelihood between two HMMs."""
    out_path = _out_dir(out)
    base = load_model(base_path)
    reduced = load_model(reduced_path)
    if not isinstance(base, Hmm) or not isinstance(reduced, Hmm):
        raise InvalidModelError("mc-oracle expects single-HMM model files")
    mean, stderr = mc_expected_loglik(base, reduced, tau, samples, np.random.default_rng(seed))
    _write_csv(out_path / "mc.csv", ["mean", "stderr"], [[mean, stderr]])
    click.echo(f"mean={mean!r} stderr={stderr!r}")


@main.command("split-pipeline")
@click.option("--data", required=True)
@click.option("--portions", type=int, required=True)
@click.option("--portion-k", type=int, required=True)
@click.option("--kr", type=int, required=True, help="Final component count.")
@click.option("--states", type=int, required=True)
@click.option("--mix", type=int, default=1, show_default=True)
@click.option("--virtual-samples", type=int, default=None)
@click.option("--tau-virtual", type=int, default=10, show_default=True)
@click.option("--starts", type=int, default=1, show_default=True, help="Seeded EM starts per portion.")
@click.option("--restarts", type=int, default=1, show_default=True, help="Competing reduction runs.")
@click.option("--out", default=".", show_default=True)
@_common_options
@_guarded
def split_pipeline(
    data, portions, portion_k, kr, states, mix, virtual_samples, tau_virtual,
    starts, restarts, out, seed, max_iters, tol, cov_floor, cov_type,
):
    """Split the data, fit a mixture per portion, pool, and reduce."""
    out_path = _out_dir(out)
    dataset = load_dataset(data)
    em_config = EmConfig(
        max_iters=max_iters, tol=tol, cov_floor=cov_floor, cov_type=cov_type,
        n_starts=starts,
    )
    vhem_config = VhemConfig(
        k_reduced=kr,
        n_virtual=virtual_samples,
        tau_virtual=tau_virtual,
        max_iters=max_iters,
        tol=tol,
        cov_floor=cov_floor,
        seed=seed,
        n_restarts=restarts,
    )
    start = time.perf_counter()
    final, report = split_estimate_aggregate(
        dataset.sequences, portions, portion_k, kr, states, mix,
        em_config, vhem_config, seed=seed,
    )
    elapsed = time.perf_counter() - start
    save_model(final, out_path / "final.json", seed=seed)
    _write_csv(
        out_path / "pipeline_portions.csv",
        ["portion", "size", "loglik"],
        [[p, s, ll] for p, (s, ll) in enumerate(zip(report.portion_sizes, report.portion_logliks))],
    )
    _write_trace(out_path / "pipeline_trace.csv", "bound", report.bound_history)
    _write_timings(out_path / "pipeline_timings.csv", [("pipeline", elapsed)])
    _write_log(
        out_path / "pipeline.log",
        [
            f"sequences={len(dataset)} portions={portions} portion_k={portion_k}"
            f" kr={kr} seed={seed}",
            f"pooled_k={report.pooled_k} effective_k={report.effective_k}",
            f"final bound={report.bound_history[-1]!r}",
            f"model written to {out_path / 'final.json'}",
        ],
    )


if __name__ == "__main__":
    main()
