import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from heatlayer.bie_solver import SolverConfig, solve_dirichlet  # noqa: E402
from heatlayer.data import HeatSourceTrace  # noqa: E402
from heatlayer.geometry import build_boundary  # noqa: E402
from heatlayer.grids import TimeGrid  # noqa: E402
from heatlayer.kernels import build_kernel_table  # noqa: E402


@pytest.fixture(scope="session")
def circle32():
    b, quad = build_boundary("circle", 32)
    tgrid = TimeGrid(0.5, 32)
    return b, quad, tgrid, build_kernel_table(quad, tgrid)


@pytest.fixture(scope="session")
def circle_solution(circle32):
    b, quad, tgrid, base = circle32
    data = HeatSourceTrace((2.0, 0.0))
    return data, solve_dirichlet(data, quad, tgrid, SolverConfig(), base=base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
