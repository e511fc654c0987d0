# dncga/harness.py
"""Experiment orchestration: replicates, pre-training, significance tests, CSV."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from dncga.config import GAConfig, NeuralConfig, OperatorKind
from dncga.errors import ConfigError
from dncga.ga import Individual, Problem, run_ga
from dncga.neuralcore import save_parameters
from dncga.operators import DeepNeuralCrossover, make_operator
from dncga.policy import policy_entropy

logger = logging.getLogger(__name__)

REFERENCE_PREFERENCE = ("dnc", "dnc_mp", "dnc_pt")


@dataclass
class ExperimentResult:
    instance: str
    operator: str
    base_seed: int
    curves: list[list[float]] = field(default_factory=list)  # internal best per generation
    finals: list[float] = field(default_factory=list)  # reported units
    durations: list[list[float]] = field(default_factory=list)  # seconds per generation

    @property
    def replicates(self) -> int:
        return len(self.finals)

    def all_durations(self) -> np.ndarray:
        return np.array([s for series in self.durations for s in series], dtype=np.float64)


@dataclass
class TimingSummary:
    mean_s: float
    max_s: float
    std_s: float


@dataclass
class ComparisonReport:
    reference: str
    # (instance, operator) -> (mean, std) of final bests
    scores: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)
    # (instance, operator) -> p-value against the reference operator on that instance
    p_values: dict[tuple[str, str], float] = field(default_factory=dict)
    timing: dict[str, TimingSummary] = field(default_factory=dict)


# -------------------------------------------------------------------
# Replicates
# -------------------------------------------------------------------
def _run_replicate(
    problem: Problem,
    kind: OperatorKind,
    ga_config: GAConfig,
    neural: NeuralConfig,
    seed: int,
    weights_path: str | None,
) -> tuple[list[float], list[float], float]:
    rng = np.random.default_rng(seed)
    operator = make_operator(kind, problem.gene_range, neural, rng, weights_path)
    history = run_ga(problem, operator, ga_config, rng)
    final = problem.report(history.best)
    if not math.isfinite(final):
        logger.warning("%s/%s seed %d ended without a valid solution", problem.name, kind, seed)
    return history.best_fitness, history.durations, final


def run_experiment(
    problem: Problem,
    kind: OperatorKind,
    ga_config: GAConfig,
    neural: NeuralConfig,
    replicates: int,
    base_seed: int,
    weights_path: str | None = None,
    jobs: int = 1,
    instance_name: str | None = None,
) -> ExperimentResult:
    """Replicate r runs with seed base_seed + r; output does not depend on `jobs`."""
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    name = instance_name or problem.name
    logger.info("experiment %s / %s: %d replicates, base seed %d", name, kind, replicates, base_seed)
    args = [(problem, kind, ga_config, neural, base_seed + r, weights_path) for r in range(replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_replicate, *zip(*args)))
    else:
        outcomes = [_run_replicate(*a) for a in args]

    result = ExperimentResult(instance=name, operator=kind, base_seed=base_seed)
    for curve, durations, final in outcomes:
        result.curves.append(curve)
        result.durations.append(durations)
        result.finals.append(final)
    logger.info("experiment %s / %s done: mean final %.6g", name, kind, float(np.mean(result.finals)))
    return result


def pretrain(
    problem: Problem,
    ga_config: GAConfig,
    neural: NeuralConfig,
    seed: int,
    out_path: str | Path,
    overwrite: bool = False,
) -> Path:
    """Train a DNC through one full GA run and save its weights."""
    out_path = Path(out_path)
    if out_path.exists() and not overwrite:
        raise ConfigError(f"{out_path} already exists (use --force to overwrite)")
    rng = np.random.default_rng(seed)
    operator = make_operator("dnc", problem.gene_range, neural, rng)
    assert isinstance(operator, DeepNeuralCrossover)
    last: list[Individual] = []

    def keep_population(gen: int, population: list[Individual], best: float) -> None:
        last[:] = population

    run_ga(problem, operator, ga_config, rng, hooks=[keep_population])
    save_parameters(operator.model, out_path)

    updates = len(operator.losses)
    if updates == 0:
        logger.warning(
            "pretraining on %s made no policy update (BATCH_SIZE=%d); %s holds the initial weights",
            problem.name, neural.batch_size, out_path,
        )
    if len(last) >= 2:
        pairs = np.stack([[a.genome, b.genome] for a, b in zip(last[0::2], last[1::2])])
        entropy = policy_entropy(operator.model, pairs, neural.pointer_lag)
        logger.info("policy entropy on the final population: %.4f nats (uniform %.4f)", entropy, math.log(2))
    logger.info("pretrained on %s with %d policy updates -> %s", problem.name, updates, out_path)
    return out_path


# -------------------------------------------------------------------
# Statistics
# -------------------------------------------------------------------
def _abs_mean_difference(x: np.ndarray, y: np.ndarray, axis: int) -> np.ndarray:
    return np.abs(np.mean(x, axis=axis) - np.mean(y, axis=axis))


def permutation_test(
    sample_a: Sequence[float],
    sample_b: Sequence[float],
    rounds: int = 10000,
    rng: np.random.Generator | None = None,
) -> float:
    """Two-sided permutation test on |mean(a) - mean(b)|.

    p = (#{null >= observed} + 1) / (#null + 1). The null holds `rounds`
    random splits, or every split when the pooled data admit no more than
    `rounds`; the add-one count applies to both.
    NaN when either sample holds a non-finite value.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("permutation test needs two non-empty samples")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        return float("nan")
    res = stats.permutation_test(
        (a, b),
        _abs_mean_difference,
        permutation_type="independent",
        vectorized=True,
        n_resamples=rounds,
        alternative="greater",
        random_state=rng if rng is not None else np.random.default_rng(),
    )
    null = res.null_distribution
    # float noise in the permuted means must not drop ties with the observed value
    tol = 1e-14 * max(1.0, abs(float(res.statistic)))
    extreme = int(np.count_nonzero(null >= res.statistic - tol))
    return (extreme + 1) / (null.size + 1)


def pick_reference(operators: Sequence[str]) -> str:
    for kind in REFERENCE_PREFERENCE:
        if kind in operators:
            return kind
    return operators[0]


def compare(
    results: Sequence[ExperimentResult], rounds: int = 10000, rng: np.random.Generator | None = None
) -> ComparisonReport:
    if not results:
        raise ValueError("nothing to compare")
    rng = rng if rng is not None else np.random.default_rng(0)
    operators = list(dict.fromkeys(r.operator for r in results))
    report = ComparisonReport(reference=pick_reference(operators))

    by_instance: dict[str, dict[str, ExperimentResult]] = {}
    for r in results:
        by_instance.setdefault(r.instance, {})[r.operator] = r
        finals = np.asarray(r.finals, dtype=np.float64)
        report.scores[(r.instance, r.operator)] = (float(finals.mean()), float(finals.std()))

    for instance, runs in by_instance.items():
        ref = runs.get(report.reference)
        if ref is None:
            continue
        for kind, r in runs.items():
            if kind != report.reference:
                report.p_values[(instance, kind)] = permutation_test(ref.finals, r.finals, rounds, rng)

    for kind in operators:
        secs = np.concatenate([r.all_durations() for r in results if r.operator == kind])
        if secs.size:
            report.timing[kind] = TimingSummary(float(secs.mean()), float(secs.max()), float(secs.std()))
        else:
            report.timing[kind] = TimingSummary(math.nan, math.nan, math.nan)
    return report


# -------------------------------------------------------------------
# Output
# -------------------------------------------------------------------
def _fmt(x: float) -> str:
    return repr(float(x))


def emit_csv(
    results: Sequence[ExperimentResult], comparison: ComparisonReport, out_dir: str | Path
) -> list[Path]:
    if not results:
        raise ValueError("no results to write")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "summary.csv", out_dir / "curves.csv", out_dir / "timing.csv"]

    with paths[0].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "operator", "mean", "std", "p_vs_reference"])
        for (instance, kind), (mean, std) in comparison.scores.items():
            p = comparison.p_values.get((instance, kind))
            writer.writerow([instance, kind, _fmt(mean), _fmt(std), "" if p is None else _fmt(p)])

    with paths[1].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "operator", "replicate", "generation", "best_fitness"])
        for r in results:
            for rep, curve in enumerate(r.curves):
                for gen, value in enumerate(curve):
                    writer.writerow([r.instance, r.operator, rep, gen, _fmt(value)])

    with paths[2].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["operator", "mean_s", "max_s", "std_s"])
        for kind, t in comparison.timing.items():
            writer.writerow([kind, _fmt(t.mean_s), _fmt(t.max_s), _fmt(t.std_s)])

    for p in paths:
        logger.info("wrote %s", p)
    return paths


def format_summary(comparison: ComparisonReport) -> str:
    rows = [("instance", "operator", "mean", "std", f"p vs {comparison.reference}")]
    for (instance, kind), (mean, std) in comparison.scores.items():
        p = comparison.p_values.get((instance, kind))
        rows.append((instance, kind, f"{mean:.4f}", f"{std:.4f}", "-" if p is None else f"{p:.4f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)
