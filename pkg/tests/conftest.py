import numpy as np
import pytest

from specmatch import build_operators, eigendecompose
from specmatch.generate import (
    bumpy_sphere,
    grid_mesh,
    icosphere,
    strip_mesh,
    triangle_lattice,
)


@pytest.fixture(scope="session")
def ico1():
    return icosphere(1)


@pytest.fixture(scope="session")
def ico2():
    return icosphere(2)


@pytest.fixture(scope="session")
def bumpy1():
    return bumpy_sphere(1, seed=3)


@pytest.fixture(scope="session")
def bumpy2():
    return bumpy_sphere(2, seed=3)


@pytest.fixture(scope="session")
def grid8():
    return grid_mesh(8)


@pytest.fixture(scope="session")
def strip():
    return strip_mesh(12)


@pytest.fixture(scope="session")
def lattice():
    return triangle_lattice(4, 6)


@pytest.fixture(scope="session")
def ico1_spec(ico1):
    return eigendecompose(build_operators(ico1), 12)


@pytest.fixture(scope="session")
def ico2_spec(ico2):
    return eigendecompose(build_operators(ico2), 20)


@pytest.fixture(scope="session")
def bumpy1_spec(bumpy1):
    return eigendecompose(build_operators(bumpy1), 12)


def permuted_copy(mesh, seed=0, noise=0.0):
    """A relabeled (optionally jittered) copy plus the Y->X index map."""
    from specmatch import TriMesh

    rng = np.random.default_rng(seed)
    perm = rng.permutation(mesh.vertex_count)
    position = np.argsort(perm)
    verts = mesh.vertices[perm].copy()
    if noise > 0:
        verts += rng.normal(0.0, noise * mesh.bbox_diagonal(), verts.shape)
    return TriMesh(verts, position[mesh.faces]), perm
