import numpy as np
import pytest

from hybridshape import fixtures, marching_cubes


@pytest.fixture(scope="session")
def sphere_grid_64():
    return fixtures.sphere_grid(64)


@pytest.fixture(scope="session")
def sphere_mesh_64(sphere_grid_64):
    return marching_cubes(sphere_grid_64, 0.0)


@pytest.fixture(scope="session")
def sphere_mesh_32():
    return marching_cubes(fixtures.sphere_grid(32), 0.0)


@pytest.fixture(scope="session")
def torus_mesh_64():
    return marching_cubes(fixtures.torus_grid(64), 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
