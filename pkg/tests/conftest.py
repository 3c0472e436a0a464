import numpy as np
import pytest

from ibonset import ConditionalMatrix, DiscreteJoint


def two_cluster_cond(rho: float, per_class: int = 4) -> ConditionalMatrix:
    """Uniform-weight table: per_class copies of (1-rho, rho) then of
    (rho, 1-rho)."""
    rows = [[1.0 - rho, rho]] * per_class + [[rho, 1.0 - rho]] * per_class
    return ConditionalMatrix(np.array(rows))


def two_cluster_joint(rho: float) -> DiscreteJoint:
    """Balanced binary joint with flip rate rho."""
    return DiscreteJoint(
        np.array([[1.0 - rho, rho], [rho, 1.0 - rho]]) / 2.0
    )


def random_joint(rng: np.random.Generator, max_x: int = 8, max_y: int = 6) -> DiscreteJoint:
    nx = int(rng.integers(2, max_x + 1))
    ny = int(rng.integers(2, max_y + 1))
    return DiscreteJoint(rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny))


def random_cond(rng: np.random.Generator, n: int, c: int) -> ConditionalMatrix:
    rows = rng.dirichlet(np.ones(c), size=n)
    weights = rng.dirichlet(np.ones(n) * 5.0)
    return ConditionalMatrix(rows, weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
