"""Shared fixtures: small cached backgrounds for the unit-test modules."""

import numpy as np
import pytest

from statvac import chart_tensor as ct
from statvac.backgrounds import BackgroundSpec, make_background


@pytest.fixture(scope="session")
def eu_small():
    grid = ct.axisym_grid(1.5, 2.5, 24, 16)
    return make_background(BackgroundSpec("euclidean"), grid)


@pytest.fixture(scope="session")
def schw_small():
    grid = ct.axisym_grid(1.5, 2.5, 24, 16)
    return make_background(BackgroundSpec("schwarzschild", m=0.5), grid)


@pytest.fixture(scope="session")
def schw_radial():
    grid = ct.radial_grid(1.5, 20.0, 96)
    return make_background(BackgroundSpec("schwarzschild", m=0.5), grid)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
