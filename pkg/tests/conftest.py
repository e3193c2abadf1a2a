import numpy as np
import pytest

from bgsindy import generate


@pytest.fixture(scope="session")
def kdv_dataset():
    return generate("kdv")


@pytest.fixture(scope="session")
def burgers_dataset():
    return generate("burgers-hyper")


@pytest.fixture(scope="session")
def ks_dataset():
    return generate("modified-ks")


@pytest.fixture(scope="session")
def rd_dataset():
    return generate("rd2d")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
