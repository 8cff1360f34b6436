import numpy as np
import pytest
from hypothesis import settings

from pmvir.geometry import Camera, RefinableMesh, icosphere
from pmvir.synth import default_scene, render_views

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def identity_camera():
    return Camera(100.0, 100.0, 50.0, 50.0, np.eye(3), np.zeros(3), 100, 100)


@pytest.fixture
def tetrahedron():
    V = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    F = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return RefinableMesh(V, F)


@pytest.fixture
def cube():
    V = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    F = []
    for a, b, c, d in quads:
        # split along the diagonal that avoids the (+,+,+) corner so it touches one triangle per side
        if 7 in (a, c):
            F += [(b, c, d), (b, d, a)]
        else:
            F += [(a, b, c), (a, c, d)]
    return RefinableMesh(V, np.array(F))


@pytest.fixture(scope="session")
def small_scene():
    scene = default_scene(n_views=6, size=96, subdivisions=1)
    return scene, render_views(scene)


@pytest.fixture(scope="session")
def sphere():
    return icosphere(3)
