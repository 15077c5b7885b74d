import numpy as np
import pytest

from dipoleid.functionals import ProblemContext
from dipoleid.linalg import basis_state, make_hermitian
from dipoleid.propagator import TimeGrid

PAPER_H = 1e-2 * np.diag([1.0, 2.0, 4.0])
PAPER_MU_STAR = np.array([
    [2.4154, 1.9335, 1.5822],
    [1.9335, 1.4366, 1.5991],
    [1.5822, 1.5991, 1.9843],
])


def random_hermitian(rng, n=3, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * make_hermitian(a + a.conj().T)


def random_state(rng, n=3):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def paper_ctx_small():
    """Paper's level structure on a short, coarse grid for fast tests."""
    return ProblemContext(PAPER_H, basis_state(3, 0), basis_state(3, 2), TimeGrid(60.0, 120), beta=1e-2)


@pytest.fixture
def random_ctx(rng):
    H = random_hermitian(rng, scale=0.05)
    return ProblemContext(H, random_state(rng), random_state(rng), TimeGrid(20.0, 50), beta=1e-2)
