import numpy as np
import pytest

from schemas import EvolutionConfig, NonlinearitySpec, ProjectionParams
from services.dynamics_service import dynamics_service
from services.radial_service import radial_service
from services.scattering_service import scattering_service


@pytest.fixture(scope="module")
def grid():
    """n = 5 grid wide enough for unit Gaussians up to t ~ 1"""
    return radial_service.build_grid(5, 30.0, 256)


@pytest.fixture(scope="module")
def small_grid():
    return radial_service.build_grid(5, 20.0, 64)


@pytest.fixture
def params():
    return ProjectionParams(M=10.0, R=2.0)


@pytest.fixture(autouse=True)
def restore_pull_domain():
    yield
    scattering_service.configure("open", None)


def free_config(grid, t_end=2.0, stride=4):
    initial = radial_service.gaussian(grid)
    return EvolutionConfig(
        grid=grid,
        nonlinearity=NonlinearitySpec(),
        initial=initial,
        dt=min(dynamics_service.default_dt(grid), t_end),
        t_end=t_end,
        snapshot_stride=stride,
    )


@pytest.fixture(scope="module")
def free_run(small_grid):
    config = free_config(small_grid)
    return config, dynamics_service.evolve(config)


@pytest.fixture(scope="module")
def free_reversed(free_run):
    config, _ = free_run
    return dynamics_service.time_reversed_trajectory(config)


def rel_error(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
