import numpy as np
import pytest

from bvpsens import _backend
from bvpsens.problem import builtin, validate
from bvpsens.shoot import newton_solve


@pytest.fixture(scope="session")
def t1():
    return validate(builtin("t1_linear"))


@pytest.fixture(scope="session")
def t2():
    return validate(builtin("t2_pendulum"))


@pytest.fixture(scope="session")
def t1_sol(t1):
    return newton_solve(t1)


@pytest.fixture(scope="session")
def t2_sol(t2):
    return newton_solve(t2)


@pytest.fixture(params=_backend.available())
def backend(request):
    prev = _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(prev)


@pytest.fixture
def grid01():
    return np.linspace(0.0, 2.5, 101)
