import numpy as np
import pytest

from willmore import TriMesh, shapes


@pytest.fixture
def right_triangle():
    return TriMesh(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        [[0, 1, 2]],
    )


@pytest.fixture
def icosahedron():
    return shapes.icosahedron()


@pytest.fixture
def icosphere2():
    return shapes.icosphere(2)


@pytest.fixture
def bumpy_sphere():
    """Closed mesh safely away from any critical point."""
    return shapes.perturbed(shapes.icosphere(2), 0.02, seed=1)


@pytest.fixture
def unit_cube():
    """Unit cube [0,1]^3 as 12 consistently outward-oriented triangles."""
    corners = np.array(
        [
            [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
            [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1],
        ],
        dtype=float,
    )
    quads = [
        (3, 2, 1, 0),  # bottom (z=0), outward -z
        (4, 5, 6, 7),  # top
        (0, 1, 5, 4),  # front (y=0)
        (2, 3, 7, 6),  # back
        (1, 2, 6, 5),  # right (x=1)
        (3, 0, 4, 7),  # left
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return TriMesh(corners, faces)
