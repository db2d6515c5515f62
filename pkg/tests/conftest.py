import numpy as np
import pytest

from nmat.boundary import solve
from nmat.potential import Potential, RadialProfile

DISKS = [(1.0, 1.0), (2.0, 1.0), (1.0, 0.5), (0.5, 2.0)]
CLOSED = [(1.0, 1.0, 0.2), (0.5, 2.0, 0.1), (1.0, 2.0, 0.3)]


def solved_potentials():
    pots = {}
    for C, b in DISKS:
        pots[f"disk C={C} b={b}"] = Potential(RadialProfile.power(C, b))
    for C, b, K in CLOSED:
        pots[f"power C={C} b={b} K={K}"] = Potential(RadialProfile.power(C, b), (K,))
    pots["power complex K"] = Potential(RadialProfile.power(1, 1), (0.15 + 0.1j,))
    pots["power cubic"] = Potential(RadialProfile.power(1, 1), (0.1, 0.05, 0.03j))
    pots["generalized (-1,1) K=0.1"] = Potential(RadialProfile.generalized((-1, 1)), (0.1,))
    pots["generalized (-2,0.5,1.5) K=0.01"] = Potential(RadialProfile.generalized((-2, 0.5, 1.5), 0.7), (0.01,))
    return pots


@pytest.fixture(scope="session")
def solved_cases():
    return {name: (pot, solve(pot)) for name, pot in solved_potentials().items()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
