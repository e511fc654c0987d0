# dncga/ga.py
"""Generational GA: fitness -> tournament selection -> crossover -> mutation.

Fitness is always maximized internally; problems convert to their own
reporting units (e.g. a positive color count) through Problem.report.
"""
from __future__ import annotations

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Literal, Sequence

import numpy as np

from dncga.config import GAConfig
from dncga.errors import ShapeError

if TYPE_CHECKING:
    from dncga.operators import CrossoverOperator

logger = logging.getLogger(__name__)

NEGATIVE_INFINITY = float("-inf")

Genome = np.ndarray  # 1-D int64, values in [0, gene_range)


@dataclass
class Individual:
    genome: Genome
    fitness: float = NEGATIVE_INFINITY


class Problem(ABC):
    """A benchmark instance seen through the GA's eyes."""

    name: str = ""
    direction: Literal["minimize", "maximize"] = "maximize"

    @property
    @abstractmethod
    def genome_length(self) -> int: ...

    @property
    @abstractmethod
    def gene_range(self) -> int:
        """Exclusive upper bound on gene values."""

    @abstractmethod
    def fitness(self, genome: Genome) -> float:
        """Internal, maximized fitness; NEGATIVE_INFINITY marks an invalid genome."""

    @abstractmethod
    def is_valid(self, genome: Genome) -> bool: ...

    @abstractmethod
    def report(self, individual: Individual) -> float:
        """Fitness in the problem's display units."""

    def check_genome(self, genome: Genome) -> None:
        if genome.shape != (self.genome_length,):
            raise ShapeError(
                f"{self.name}: genome has shape {genome.shape}, expected ({self.genome_length},)"
            )

    def evaluate(self, genome: Genome) -> Individual:
        return Individual(genome=genome, fitness=self.fitness(genome))


# -------------------------------------------------------------------
# Operators on the population
# -------------------------------------------------------------------
def init_population(problem: Problem, config: GAConfig, rng: np.random.Generator) -> list[Individual]:
    genomes = rng.integers(0, problem.gene_range, size=(config.population_size, problem.genome_length))
    return [problem.evaluate(g) for g in genomes]


def tournament_select(population: Sequence[Individual], k: int, rng: np.random.Generator) -> Individual:
    """k draws with replacement; the fittest wins, ties broken uniformly."""
    if not population:
        raise ValueError("tournament on an empty population")
    if k < 1:
        raise ValueError(f"tournament size must be >= 1, got {k}")
    idx = rng.integers(0, len(population), size=k)
    fits = np.array([population[i].fitness for i in idx])
    tied = idx[fits == fits.max()]
    winner = tied[0] if len(tied) == 1 else tied[rng.integers(0, len(tied))]
    return population[winner]


def uniform_mutation(
    genome: Genome, mutation_prob: float, gene_range: int, rng: np.random.Generator
) -> Genome:
    mask = rng.random(genome.shape[0]) < mutation_prob
    if not mask.any():
        return genome
    child = genome.copy()
    child[mask] = rng.integers(0, gene_range, size=int(mask.sum()))
    return child


def evolve_generation(
    population: list[Individual],
    problem: Problem,
    operator: CrossoverOperator,
    config: GAConfig,
    rng: np.random.Generator,
) -> list[Individual]:
    """Build the next population, one child per tournament-selected parent group.

    Parent groups and crossover coin flips are drawn for the whole generation
    first, so the operator can produce every offspring in one call.
    """
    children: list[Individual] = []
    if config.elitism:
        elite = max(population, key=lambda ind: ind.fitness)
        children.append(Individual(genome=elite.genome.copy(), fitness=elite.fitness))

    groups: list[list[Individual]] = []
    crossed: list[bool] = []
    for _ in range(config.population_size - len(children)):
        groups.append([tournament_select(population, config.tournament_k, rng) for _ in range(operator.arity)])
        crossed.append(bool(rng.random() < config.crossover_prob))

    to_cross = [g for g, c in zip(groups, crossed) if c]
    offspring = operator.apply_many(to_cross, rng) if to_cross else []
    offspring_fitness = [problem.fitness(g) for g in offspring]
    operator.assign_rewards(offspring_fitness)

    made = iter(zip(offspring, offspring_fitness))
    for parents, do_cross in zip(groups, crossed):
        if do_cross:
            genome, fit = next(made)
        else:
            genome, fit = parents[0].genome, parents[0].fitness
        mutated = uniform_mutation(genome, config.mutation_prob, problem.gene_range, rng)
        if mutated is genome:
            # children never alias a parent's array
            mutated = genome.copy()
        else:
            fit = problem.fitness(mutated)
        children.append(Individual(genome=mutated, fitness=fit))
    return children


# -------------------------------------------------------------------
# Main loop
# -------------------------------------------------------------------
GenerationHook = Callable[[int, list[Individual], float], None]


@dataclass
class RunHistory:
    """One GA run: per-generation best (internal units) and wall-clock seconds."""

    best_fitness: list[float] = field(default_factory=list)
    durations: list[float] = field(default_factory=list)
    best: Individual | None = None


def run_ga(
    problem: Problem,
    operator: CrossoverOperator,
    config: GAConfig,
    rng: np.random.Generator,
    hooks: Sequence[GenerationHook] = (),
) -> RunHistory:
    population = init_population(problem, config, rng)
    history = RunHistory(best=max(population, key=lambda ind: ind.fitness))

    for gen in range(config.generations):
        started = time.perf_counter()
        population = evolve_generation(population, problem, operator, config, rng)
        operator.end_of_generation()
        elapsed = time.perf_counter() - started

        gen_best = max(population, key=lambda ind: ind.fitness)
        if gen_best.fitness > history.best.fitness:
            history.best = gen_best
        history.best_fitness.append(gen_best.fitness)
        history.durations.append(elapsed)
        logger.debug("%s gen %d best=%s (%.3fs)", problem.name, gen, gen_best.fitness, elapsed)
        for hook in hooks:
            hook(gen, population, gen_best.fitness)
    return history
