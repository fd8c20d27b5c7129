import numpy as np
import pytest

from surfharm import (
    TriangleMesh,
    bumpy_icosphere,
    icosphere,
    plane_grid,
    solve_spectrum,
)


def random_rotation(rng):
    """Uniform random proper rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1.0
    return q


def transformed(mesh, rotation, translation):
    return TriangleMesh(mesh.vertices @ rotation.T + translation, mesh.faces)


@pytest.fixture
def tetra():
    # regular tetrahedron with unit edge length
    s = 1.0 / np.sqrt(2.0)
    vertices = np.array(
        [[1, 0, -s], [-1, 0, -s], [0, 1, s], [0, -1, s]], dtype=float
    ) * 0.5
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriangleMesh(vertices, faces)


@pytest.fixture
def single_triangle():
    # equilateral, unit edge, in the z=0 plane
    vertices = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3.0) / 2.0, 0.0]]
    )
    return TriangleMesh(vertices, np.array([[0, 1, 2]]))


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(2, radius=1.0)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3, radius=1.0)


@pytest.fixture(scope="session")
def bumpy162():
    return bumpy_icosphere(2, radius=1.0, amplitude=0.2, seed=0)


@pytest.fixture(scope="session")
def grid_mesh():
    return plane_grid(6, 5, spacing=0.5)


@pytest.fixture(scope="session")
def sphere2_basis(sphere2):
    return solve_spectrum(sphere2, k=30)


@pytest.fixture(scope="session")
def bumpy162_basis(bumpy162):
    return solve_spectrum(bumpy162, k=24)
