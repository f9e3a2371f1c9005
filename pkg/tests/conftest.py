import numpy as np
import pytest

from tdglfem.mesh import Mesh, generate_uniform_square


@pytest.fixture
def unit_tri():
    # single right triangle (0,0)-(1,0)-(0,1)
    return Mesh.from_cells(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
    )


@pytest.fixture
def square2():
    return generate_uniform_square(2)


@pytest.fixture
def square4():
    return generate_uniform_square(4)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
