import numpy as np
import pytest

from rgglab.atlas import named_shape
from rgglab.densities import PowerLawDensity, VonMisesDensity


@pytest.fixture(scope="session")
def power24():
    return PowerLawDensity(2, 4.0)


@pytest.fixture(scope="session")
def power12():
    return PowerLawDensity(1, 2.0)


@pytest.fixture(scope="session")
def vm11():
    return VonMisesDensity(1, 1.0)


@pytest.fixture(scope="session")
def vm21():
    return VonMisesDensity(2, 1.0)


@pytest.fixture(scope="session")
def k2():
    return named_shape(2, "complete")


@pytest.fixture(scope="session")
def path3():
    return named_shape(3, "path")


@pytest.fixture(scope="session")
def triangle():
    return named_shape(3, "complete")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
