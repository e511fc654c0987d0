# dncga/operators.py
"""Crossover operators. Every operator returns one child per application."""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dncga.config import NeuralConfig, OperatorKind
from dncga.errors import ConfigError, DegenerateGenomeError, ShapeError, TrainingDivergenceError, TransferIncompatibilityError
from dncga.ga import NEGATIVE_INFINITY, Genome, Individual
from dncga.neuralcore import AdamState, PolicyParameters, adam_step, init_parameters, load_parameters
from dncga.policy import decode_children, reinforce_gradients

logger = logging.getLogger(__name__)


def _stack(parents: Sequence[Genome]) -> np.ndarray:
    lengths = {len(p) for p in parents}
    if len(lengths) != 1:
        raise ShapeError(f"parents differ in length: {sorted(lengths)}")
    return np.stack([np.asarray(p) for p in parents])


# -------------------------------------------------------------------
# Classical operators
# -------------------------------------------------------------------
def one_point(parents: Sequence[Genome], rng: np.random.Generator) -> Genome:
    p1, p2 = _stack(parents)
    n = p1.shape[0]
    if n < 2:
        raise DegenerateGenomeError(f"one-point crossover needs genomes of length >= 2, got {n}")
    cut = int(rng.integers(1, n))
    return np.concatenate([p1[:cut], p2[cut:]])


def equiprobable_uniform(parents: Sequence[Genome], rng: np.random.Generator) -> Genome:
    stacked = _stack(parents)
    m, n = stacked.shape
    donors = rng.integers(0, m, size=n)
    return stacked[donors, np.arange(n)]


def adaptive_probability(f1: float, f2: float, shift: float | None = None) -> float:
    """Probability of inheriting from parent 1, from the shifted fitness ratio."""
    if f1 == f2 or f1 == NEGATIVE_INFINITY or f2 == NEGATIVE_INFINITY:
        return 0.5
    low = min(f1, f2)
    if shift is None:
        shift = 1e-6 * (1.0 + abs(f1 - f2))
    a, b = f1 - low + shift, f2 - low + shift
    return a / (a + b)


def adaptive_uniform(
    parents: Sequence[Genome],
    fitnesses: Sequence[float],
    rng: np.random.Generator,
    shift: float | None = None,
) -> Genome:
    p1, p2 = _stack(parents)
    q = adaptive_probability(fitnesses[0], fitnesses[1], shift)
    return np.where(rng.random(p1.shape[0]) < q, p1, p2)


class CrossoverOperator(ABC):
    name: str = ""
    arity: int = 2

    @abstractmethod
    def apply(self, parents: Sequence[Individual], rng: np.random.Generator) -> Genome: ...

    def apply_many(self, groups: Sequence[Sequence[Individual]], rng: np.random.Generator) -> list[Genome]:
        return [self.apply(g, rng) for g in groups]

    def assign_rewards(self, fitnesses: Sequence[float]) -> None:
        """Fitness of the offspring returned by the last apply_many, in order."""

    def end_of_generation(self) -> None:
        pass

    def _check_arity(self, parents: Sequence[Individual]) -> None:
        if len(parents) != self.arity:
            raise ShapeError(f"{self.name} expects {self.arity} parents, got {len(parents)}")


class OnePointCrossover(CrossoverOperator):
    name = "one_point"

    def apply(self, parents, rng):
        self._check_arity(parents)
        return one_point([p.genome for p in parents], rng)


class UniformCrossover(CrossoverOperator):
    def __init__(self, arity: int = 2):
        self.arity = arity
        self.name = "equiprobable_uniform" if arity == 2 else "multi_parent_uniform"

    def apply(self, parents, rng):
        self._check_arity(parents)
        return equiprobable_uniform([p.genome for p in parents], rng)


class AdaptiveUniformCrossover(CrossoverOperator):
    name = "adaptive_uniform"

    def apply(self, parents, rng):
        self._check_arity(parents)
        return adaptive_uniform([p.genome for p in parents], [p.fitness for p in parents], rng)


# -------------------------------------------------------------------
# Deep neural crossover
# -------------------------------------------------------------------
@dataclass
class CrossoverRecord:
    parents: np.ndarray  # [m, n]
    choices: np.ndarray  # [n] parent index per step (0-based)
    log_probs: np.ndarray  # [n]
    random_steps: np.ndarray  # [n] bool
    child: Genome
    reward: float | None = None


class TrainingBuffer:
    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self.records: list[CrossoverRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    @property
    def full(self) -> bool:
        return len(self.records) >= self.capacity

    def extend(self, records: Sequence[CrossoverRecord]) -> None:
        self.records.extend(records)

    def drain(self) -> list[CrossoverRecord]:
        records, self.records = self.records, []
        return records


def dnc_apply_many(
    groups: np.ndarray,
    model: PolicyParameters,
    neural: NeuralConfig,
    buffer: TrainingBuffer | None,
    training_enabled: bool,
    rng: np.random.Generator,
) -> tuple[list[Genome], list[CrossoverRecord]]:
    """Decode one child per parent group [K, m, n]; records go to the buffer when training."""
    groups = np.asarray(groups)
    top = int(groups.max()) if groups.size else 0
    if top >= model.vocab_size:
        raise TransferIncompatibilityError(
            f"gene value {top} does not fit the model's vocab_size {model.vocab_size}"
        )
    result = decode_children(
        model, groups, neural.epsilon, rng, epsilon_mode=neural.epsilon_mode, pointer_lag=neural.pointer_lag
    )
    children = list(result.children)
    records = [
        CrossoverRecord(
            parents=groups[k],
            choices=result.choices[k],
            log_probs=result.log_probs[k],
            random_steps=result.random_steps[k],
            child=children[k],
        )
        for k in range(len(children))
    ]
    if training_enabled and buffer is not None:
        buffer.extend(records)
    return children, records


def dnc_apply(
    parents: Sequence[Genome],
    model: PolicyParameters,
    neural: NeuralConfig,
    buffer: TrainingBuffer | None,
    training_enabled: bool,
    rng: np.random.Generator,
) -> Genome:
    children, _ = dnc_apply_many(_stack(parents)[None, ...], model, neural, buffer, training_enabled, rng)
    return children[0]


def dnc_reward(fitnesses: Sequence[float]) -> np.ndarray:
    """Batch rewards: invalid children are placed below the worst valid one, then z-scored."""
    raw = np.asarray(fitnesses, dtype=np.float64)
    finite = np.isfinite(raw)
    if not finite.any():
        return np.zeros_like(raw)
    valid = raw[finite]
    spread = valid.std()
    rewards = np.where(finite, raw, valid.min() - (spread if spread > 0 else 1.0))
    std = rewards.std()
    if std == 0:
        return np.zeros_like(rewards)
    return (rewards - rewards.mean()) / std


def train_step(
    buffer: TrainingBuffer, model: PolicyParameters, adam_state: AdamState, neural: NeuralConfig
) -> float:
    """One REINFORCE update from every buffered record; the buffer is emptied."""
    if not buffer.full:
        raise ValueError(f"train_step needs {buffer.capacity} records, buffer holds {len(buffer)}")
    records = buffer.drain()
    missing = sum(r.reward is None for r in records)
    if missing:
        raise ValueError(f"{missing} buffered records have no reward")

    rewards = dnc_reward([r.reward for r in records])
    loss, grads = reinforce_gradients(
        model,
        np.stack([r.parents for r in records]),
        np.stack([r.choices for r in records]),
        ~np.stack([r.random_steps for r in records]),
        rewards,
        pointer_lag=neural.pointer_lag,
        chunk_size=neural.grad_chunk,
    )
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"surrogate loss is {loss}")
    adam_step(model, grads, adam_state)
    logger.info("policy update %d on %d records: loss=%.6g", adam_state.t, len(records), loss)
    return loss


class DeepNeuralCrossover(CrossoverOperator):
    """Learned crossover; trains online unless built frozen (pre-trained mode)."""

    def __init__(
        self,
        model: PolicyParameters,
        neural: NeuralConfig,
        arity: int = 2,
        training_enabled: bool = True,
        name: str = "dnc",
    ):
        self.model = model
        self.neural = neural
        self.arity = arity
        self.training_enabled = training_enabled
        self.name = name
        self.buffer = TrainingBuffer(neural.batch_size)
        self.adam = (
            AdamState.for_parameters(
                model, lr=neural.learning_rate, beta1=neural.beta1, beta2=neural.beta2, eps=neural.adam_eps
            )
            if training_enabled
            else None
        )
        self.losses: list[float] = []
        self._awaiting: list[CrossoverRecord] = []

    def apply(self, parents, rng):
        return self.apply_many([parents], rng)[0]

    def apply_many(self, groups, rng):
        for g in groups:
            self._check_arity(g)
        stacked = np.stack([[p.genome for p in g] for g in groups])
        children, records = dnc_apply_many(
            stacked, self.model, self.neural, self.buffer, self.training_enabled, rng
        )
        self._awaiting = records if self.training_enabled else []
        return children

    def assign_rewards(self, fitnesses):
        if not self._awaiting:
            return
        if len(fitnesses) != len(self._awaiting):
            raise ValueError(f"{len(fitnesses)} rewards for {len(self._awaiting)} offspring")
        for record, fit in zip(self._awaiting, fitnesses):
            record.reward = float(fit)
        self._awaiting = []

    def end_of_generation(self):
        if self.training_enabled and self.buffer.full:
            self.losses.append(train_step(self.buffer, self.model, self.adam, self.neural))


def make_operator(
    kind: OperatorKind,
    gene_range: int,
    neural: NeuralConfig,
    rng: np.random.Generator,
    weights_path: str | Path | None = None,
) -> CrossoverOperator:
    if kind == "one_point":
        return OnePointCrossover()
    if kind == "equiprobable_uniform":
        return UniformCrossover(2)
    if kind == "multi_parent_uniform":
        return UniformCrossover(3)
    if kind == "adaptive_uniform":
        return AdaptiveUniformCrossover()
    if kind in ("dnc", "dnc_mp"):
        model = init_parameters(neural.latent_dim, gene_range, rng)
        return DeepNeuralCrossover(model, neural, arity=3 if kind == "dnc_mp" else 2, name=kind)
    if kind == "dnc_pt":
        if not weights_path:
            raise ConfigError("operator dnc_pt needs a weights file (WEIGHTS_PATH / --weights)")
        model = load_parameters(weights_path, required_vocab=gene_range)
        model.freeze()
        return DeepNeuralCrossover(model, neural, arity=2, training_enabled=False, name=kind)
    raise ConfigError(f"unknown operator kind {kind!r}")
