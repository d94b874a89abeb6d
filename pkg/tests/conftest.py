import numpy as np
import pytest

from toric_kahler.polytope import builtin, fano_structure
from toric_kahler.potential import guillemin_potential


def round_sphere(x):
    x = np.asarray(x, dtype=float)
    return x * np.log(x) + (1 - x) * np.log(1 - x)


@pytest.fixture(scope="session")
def interval():
    return builtin("interval")


@pytest.fixture(scope="session")
def square():
    return builtin("square")


@pytest.fixture(scope="session")
def simplex():
    return builtin("simplex")


@pytest.fixture(scope="session")
def bl1cp2():
    return builtin("bl1cp2")


@pytest.fixture(scope="session")
def fano_interval():
    return fano_structure(builtin("fano-interval"))


@pytest.fixture(scope="session")
def fano_square():
    return fano_structure(builtin("fano-square"))


@pytest.fixture(scope="session")
def fano_bl1cp2():
    return fano_structure(builtin("bl1cp2"))


@pytest.fixture(scope="session")
def sphere_u(interval):
    return guillemin_potential(interval)
