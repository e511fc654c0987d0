import numpy as np
import pytest

from dncga.config import NeuralConfig
from dncga.ga import Individual
from dncga.neuralcore import init_parameters


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_params():
    """d=4 policy over gene values 0..5."""
    return init_parameters(4, 6, np.random.default_rng(7))


@pytest.fixture
def tiny_neural():
    return NeuralConfig(latent_dim=4, batch_size=8, learning_rate=1e-2, epsilon=0.0, grad_chunk=3)


def individuals(*genomes, fitness=0.0):
    return [Individual(genome=np.asarray(g, dtype=np.int64), fitness=fitness) for g in genomes]


def binomial_bound(n, p, sigmas=3.0):
    """Half-width of a sigmas-wide interval for a binomial frequency."""
    return sigmas * np.sqrt(p * (1 - p) / n)
