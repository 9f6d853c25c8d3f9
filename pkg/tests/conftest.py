import numpy as np
import pytest

from plugrl.core import stream


@pytest.fixture
def rng():
    return stream(1234, "tests")


def pytest_configure(config):
    np.seterr(over="raise", invalid="raise", divide="raise")
