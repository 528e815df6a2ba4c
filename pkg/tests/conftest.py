import numpy as np
import pytest

import jacshape as js


def make_disk(res):
    return js.build_domain(
        {"shape": "disk", "center": [0.0, 0.0], "radius": 1.0}, res
    )


def make_square(res):
    return js.build_domain(
        {"shape": "rectangle", "corners": [[0.0, 0.0], [1.0, 1.0]]}, res
    )


def make_interval(res, a=0.0, b=1.0):
    return js.build_domain({"shape": "interval", "a": a, "b": b}, res)


@pytest.fixture(scope="session")
def disk64():
    return make_disk(64)


@pytest.fixture(scope="session")
def disk128():
    return make_disk(128)


@pytest.fixture(scope="session")
def square64():
    return make_square(64)


@pytest.fixture(scope="session")
def square128():
    return make_square(128)


@pytest.fixture(scope="session")
def interval512():
    return make_interval(512)


def radial(dom):
    X, Y = dom.coords()
    return np.hypot(X, Y)
