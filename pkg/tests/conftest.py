import numpy as np
import pytest

from slope_tradeoff.dists import ProblemShape


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture(scope="session")
def shape_d3():
    """The worked-example regime."""
    return ProblemShape(delta=0.3, epsilon=0.2, sigma2=1.0)


def random_penalty(rng, p, scale=2.0):
    theta = np.sort(rng.uniform(0.0, scale, p))[::-1]
    if theta[0] <= 0:
        theta[0] = scale / 2
    return theta
