import numpy as np
import pytest

from wkbmarch.coeffs import get_problem


@pytest.fixture(scope="session")
def affine_problem():
    return get_problem("affine-squared")


@pytest.fixture(scope="session")
def constant_problem():
    return get_problem("constant")


@pytest.fixture()
def rng():
    return np.random.default_rng(987654321)
