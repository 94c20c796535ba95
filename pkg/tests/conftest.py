from __future__ import annotations

import pytest

from app.domain.base import GOLDEN, IrrationalRotation
from app.domain.circlemap import ParameterInterval
from app.domain.families import RigidFamily, SinePerturbedFamily


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rotation():
    return IrrationalRotation(GOLDEN)


@pytest.fixture
def rigid(rotation):
    return RigidFamily(rotation, ParameterInterval(0.0, 1.0))


@pytest.fixture
def sine(rotation):
    return SinePerturbedFamily(rotation, ParameterInterval(0.0, 1.0), kappa=0.1)
