import numpy as np
import pytest

from taer import build
from taer.weights import random_weights


@pytest.fixture(scope="session")
def model_cache():
    """Graphs + deterministic random weights, built once per session."""
    cache = {}

    def get(variant, order, channels=1, seed=11, scale=1.0):
        key = (variant, order, channels, seed, scale)
        if key not in cache:
            graph = build(variant, order, channels)
            cache[key] = (graph, random_weights(graph, seed=seed, weight_scale=scale))
        return cache[key]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
