import pytest

from everrod.domain import reference_material, reference_rod
from everrod.solver import SolverSettings, warmup_kernel


@pytest.fixture(scope="session", autouse=True)
def _warm_kernel():
    # compile (or load the cached) integrator before any timed assertions
    warmup_kernel()


@pytest.fixture(scope="session")
def ref_material():
    return reference_material()


@pytest.fixture(scope="session")
def ref_rod():
    return reference_rod()


@pytest.fixture(scope="session")
def default_settings():
    return SolverSettings()


@pytest.fixture(scope="session")
def fast_settings():
    # coarse grid for unit tests that only need qualitative physics
    return SolverSettings(grid_nodes=150)
