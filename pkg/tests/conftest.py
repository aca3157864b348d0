import numpy as np
import pytest

from pvapprox.geom import Ball, Box


@pytest.fixture
def disk():
    return Ball((0.0, 0.0), 1.0)


@pytest.fixture
def square():
    return Box((0.0, 0.0), (1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
