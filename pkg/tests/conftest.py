"""Shared geometry fixtures. Oracles live next to the tests that use them."""

import numpy as np
import pytest

from crownforge.mesh import TriMesh
from crownforge.synth import cylinder, icosphere


TETRA_VERTS = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
])
TETRA_FACES = np.array([
    [0, 2, 1],
    [0, 1, 3],
    [0, 3, 2],
    [1, 2, 3],
])


@pytest.fixture
def tetra():
    return TriMesh(TETRA_VERTS.copy(), TETRA_FACES.copy())


@pytest.fixture
def sphere2():
    """Unit sphere, 2 subdivisions (~320 faces)."""
    return icosphere(radius=1.0, subdivisions=2)


@pytest.fixture
def sphere3():
    """Unit sphere, 3 subdivisions (~1280 faces, ~642 vertices)."""
    return icosphere(radius=1.0, subdivisions=3)


@pytest.fixture
def open_cylinder():
    return cylinder(radius=4.0, height=8.0, segments=32, rings=6, capped=False)


@pytest.fixture
def capped_cylinder():
    return cylinder(radius=4.0, height=8.0, segments=32, rings=6, capped=True)


@pytest.fixture
def plane_grid():
    """Flat 9x9 grid in the z=0 plane."""
    n = 9
    xs = np.linspace(0.0, 8.0, n)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(n * n)])
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = a + 1
            c = a + n
            d = c + 1
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriMesh(verts, np.array(faces))


def quad_torus(major=3.0, minor=1.0, nu=24, nv=12):
    """Standard triangulated torus, chi = 0."""
    us = np.arange(nu) * (2 * np.pi / nu)
    vs = np.arange(nv) * (2 * np.pi / nv)
    verts = []
    for u in us:
        for v in vs:
            r = major + minor * np.cos(v)
            verts.append([r * np.cos(u), r * np.sin(u), minor * np.sin(v)])
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = i * nv + (j + 1) % nv
            d = ((i + 1) % nu) * nv + (j + 1) % nv
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriMesh(np.array(verts), np.array(faces))


@pytest.fixture
def torus():
    return quad_torus()


def rotation_matrix(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    t = 1.0 - c
    return np.array([
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ])
