# dncga/errors.py
from __future__ import annotations


class DncgaError(Exception):
    """Base for every error the library raises on purpose."""

    exit_code = 1


class ConfigError(DncgaError):
    exit_code = 2


class DataError(DncgaError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(DataError):
    pass


class EmbeddingRangeError(DataError):
    def __init__(self, gene: int, vocab_size: int):
        self.gene = gene
        self.vocab_size = vocab_size
        super().__init__(f"gene value {gene} outside embedding table of vocab_size {vocab_size}")


class CorruptWeightsError(DataError):
    pass


class TransferIncompatibilityError(DataError):
    pass


class DegenerateGenomeError(DataError):
    pass


class TrainingDivergenceError(DncgaError):
    exit_code = 4
