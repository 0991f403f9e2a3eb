import pytest

from lelab.geometry import Domain, generate_mesh
from lelab.solver import solve_single


@pytest.fixture(scope="session")
def disk():
    return Domain("disk", radius=1.0)


@pytest.fixture(scope="session")
def disk_mesh_coarse(disk):
    return generate_mesh(disk, 0.1)


@pytest.fixture(scope="session")
def disk_mesh(disk):
    return generate_mesh(disk, 0.05)


@pytest.fixture(scope="session")
def rec_p3(disk):
    return solve_single(disk, 3.0, 0.05)


@pytest.fixture(scope="session")
def rec_p10(disk):
    return solve_single(disk, 10.0, 0.05)
