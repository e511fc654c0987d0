# dncga/config.py
from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from dncga.errors import ConfigError

CONFIG_VERSION = 1
DIMACS_URL = "https://mat.tepper.cmu.edu/COLOR/instances"

OperatorKind = Literal[
    "one_point",
    "equiprobable_uniform",
    "adaptive_uniform",
    "multi_parent_uniform",
    "dnc",
    "dnc_pt",
    "dnc_mp",
]
InvalidMode = Literal["strict", "graded"]
EpsilonMode = Literal["per_step", "single_gene"]


class GAConfig(BaseModel):
    """Generational GA knobs; defaults are the benchmark protocol."""

    population_size: int = Field(100, ge=2)
    generations: int = Field(6000, ge=0)
    tournament_k: int = Field(5, ge=1)
    mutation_prob: float = Field(0.01, ge=0.0, le=1.0)
    crossover_prob: float = Field(0.5, ge=0.0, le=1.0)
    elitism: bool = False

    @model_validator(mode="after")
    def _k_fits_population(self) -> "GAConfig":
        if self.tournament_k > self.population_size:
            raise ValueError(
                f"tournament_k={self.tournament_k} exceeds population_size={self.population_size}"
            )
        return self


class NeuralConfig(BaseModel):
    """Policy network and REINFORCE settings."""

    latent_dim: int = Field(64, ge=1)
    batch_size: int = Field(1024, ge=1)
    learning_rate: float = Field(1e-4, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    epsilon: float = Field(0.2, ge=0.0, le=1.0)
    epsilon_mode: EpsilonMode = "per_step"
    pointer_lag: int = Field(0, ge=0, le=1)
    grad_chunk: int = Field(128, ge=1)


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    CONFIG_VERSION: int = CONFIG_VERSION
    LOG_LEVEL: str = "INFO"

    # GA
    POPULATION_SIZE: int = 100
    GENERATIONS: int = 6000
    TOURNAMENT_K: int = 5
    MUTATION_PROB: float = 0.01
    CROSSOVER_PROB: float = 0.5
    ELITISM: bool = False

    # Neural crossover
    LATENT_DIM: int = 64
    BATCH_SIZE: int = 1024
    LEARNING_RATE: float = 1e-4
    ADAM_BETA1: float = 0.9
    ADAM_BETA2: float = 0.999
    ADAM_EPS: float = 1e-8
    EPSILON: float = 0.2
    EPSILON_MODE: EpsilonMode = "per_step"
    POINTER_LAG: int = 0
    GRAD_CHUNK: int = 128

    # Experiment
    OPERATORS: list[OperatorKind] = ["dnc", "equiprobable_uniform"]
    INSTANCES: list[str] = []
    REPLICATES: int = 20
    BASE_SEED: int = 0
    WEIGHTS_PATH: str = ""
    OUTPUT_DIR: str = "results"
    INVALID_MODE: InvalidMode = "strict"
    PERMUTATION_ROUNDS: int = 10000
    JOBS: int = 1
    DIMACS_URL: str = DIMACS_URL

    @field_validator("CONFIG_VERSION")
    @classmethod
    def _known_version(cls, v: int) -> int:
        if v != CONFIG_VERSION:
            raise ValueError(f"unsupported CONFIG_VERSION {v} (expected {CONFIG_VERSION})")
        return v

    def ga_config(self) -> GAConfig:
        return GAConfig(
            population_size=self.POPULATION_SIZE,
            generations=self.GENERATIONS,
            tournament_k=self.TOURNAMENT_K,
            mutation_prob=self.MUTATION_PROB,
            crossover_prob=self.CROSSOVER_PROB,
            elitism=self.ELITISM,
        )

    def neural_config(self) -> NeuralConfig:
        return NeuralConfig(
            latent_dim=self.LATENT_DIM,
            batch_size=self.BATCH_SIZE,
            learning_rate=self.LEARNING_RATE,
            beta1=self.ADAM_BETA1,
            beta2=self.ADAM_BETA2,
            adam_eps=self.ADAM_EPS,
            epsilon=self.EPSILON,
            epsilon_mode=self.EPSILON_MODE,
            pointer_lag=self.POINTER_LAG,
            grad_chunk=self.GRAD_CHUNK,
        )


def load_settings(path: str | Path | None = None, **overrides) -> Settings:
    """Read a run file (dotenv KEY=value) plus environment, then apply overrides.

    Any validation problem surfaces as ConfigError.
    """
    if path is not None and not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        base = Settings(_env_file=path) if path is not None else Settings(_env_file=None)
        if overrides:
            # re-validate so overrides go through the same checks
            base = Settings.model_validate({**base.model_dump(), **overrides})
        base.ga_config()
        base.neural_config()
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return base

