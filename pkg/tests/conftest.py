import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from qboltz.equilibrium import QuantumMaxwellianParams, mu
from qboltz.geometry import CollisionGeometry


@pytest.fixture(scope="session")
def tiny_geom():
    """7^3 lattice with the 2x4 product rule: the oracle-comparison scale."""
    return CollisionGeometry.build(nv=7, rv=5.0, n_polar=2, n_azimuth=4)


@pytest.fixture(scope="session")
def small_geom():
    """9^3 lattice with a 4x8 rule for identity checks."""
    return CollisionGeometry.build(nv=9, rv=5.0, n_polar=4, n_azimuth=8)


def admissible_field(grid, rng, theta, amplitude=0.4):
    """Random smooth admissible state: positive, Gaussian decay, ball support,
    bounded below 1 for fermions."""
    pts = grid.points.reshape(*grid.shape, 3)
    base = np.exp(-np.sum(pts * pts, axis=-1))
    f = base * (amplitude + 0.5 * amplitude * rng.random(grid.shape))
    shift = rng.uniform(-1.0, 1.0, size=3)
    f += 0.3 * amplitude * np.exp(-np.sum((pts - shift) ** 2, axis=-1))
    if theta == -1:
        f = np.clip(f, 0.0, 0.95)
    return f * grid.ball


def maxwellian_field(grid, theta, rho=np.e):
    p = QuantumMaxwellianParams.isotropic(theta, rho)
    return grid.sample(lambda v: mu(v, p)) * grid.ball
