import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def random_positive_joint(rng, nx, ny, floor=0.02):
    """Strictly positive random joint table, rows-over-Y."""
    p = rng.random((ny, nx)) + floor
    p /= p.sum()
    return p


def random_positive_pmf(rng, n, floor=0.05):
    p = rng.random(n) + floor
    return p / p.sum()


def random_perturbation_t(rng, n):
    """Random T = K - I with K column-stochastic: a feasible channel direction.

    Columns sum to zero and off-diagonal entries are nonnegative, so
    I + eta*T stays a valid channel for all eta in [0, 1] at least.
    """
    k = rng.random((n, n)) + 0.05
    k /= k.sum(axis=0, keepdims=True)
    return k - np.eye(n)
