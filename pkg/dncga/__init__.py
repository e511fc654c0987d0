"""Genetic algorithms with a learned (pointer-network) crossover operator."""

__version__ = "0.1.0"
