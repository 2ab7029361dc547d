import numpy as np
import pytest


def random_binary(rng, n, d, p=0.5):
    """Binary matrix whose columns are never constant."""
    X = (rng.random((n, d)) < p).astype(float)
    X[0] = 1.0
    X[1] = 0.0
    return X


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_binary(rng):
    return random_binary(rng, 30, 6)
