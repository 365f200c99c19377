import numpy as np
import pytest

from birkhofflab import metric_models as mm
from birkhofflab import birkhoff_section as bs


@pytest.fixture(scope="session")
def round_model():
    return mm.make_round(1.0)


@pytest.fixture(scope="session")
def spheroid_model():
    return mm.make_spheroid(1.03)


@pytest.fixture(scope="session")
def zoll_model():
    return mm.make_zoll([0.1, 0.0, -0.1])


@pytest.fixture(scope="session")
def round_section(round_model):
    return bs.build_section(round_model)


@pytest.fixture(scope="session")
def spheroid_section(spheroid_model):
    return bs.build_section(spheroid_model)


@pytest.fixture(scope="session")
def round_grid(round_section):
    # ny = 65 keeps the monotonicity precondition and puts y = pi/2 on-grid,
    # which exercises orbits passing exactly through the poles.
    return bs.compute_return_grid(round_section, nx=32, ny=65)


@pytest.fixture(scope="session")
def spheroid_grid(spheroid_section):
    return bs.compute_return_grid(spheroid_section, nx=32, ny=65)
