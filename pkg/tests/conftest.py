import numpy as np
import pytest

from bogoexp.fixtures import get_fixture
from bogoexp.pipeline import DynamicModel, model_from_fixture


@pytest.fixture(scope="session")
def t3_model():
    return model_from_fixture(get_fixture("T3"), 2)


@pytest.fixture(scope="session")
def g3_model():
    return model_from_fixture(get_fixture("G3"), 2)


@pytest.fixture(scope="session")
def g3_dynamics():
    return DynamicModel(get_fixture("G3"), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
