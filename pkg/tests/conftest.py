import numpy as np
import pytest

from rwre import env as env_mod
from rwre.seeding import stream


@pytest.fixture
def beta32():
    """The kappa = 1 workhorse law."""
    return env_mod.BetaEnv(3.0, 2.0)


@pytest.fixture
def beta427():
    """kappa = 1.3 in closed form (alpha - beta)."""
    return env_mod.BetaEnv(4.0, 2.7)


@pytest.fixture
def two_point():
    """Discrete law with kappa = log(1.5)/log(3)."""
    return env_mod.TwoPointEnv(0.75, 0.25, 0.6)


@pytest.fixture
def rng():
    return stream(1234, "tests")


def make_env(omegas, offset=0, **kwargs):
    return env_mod.Environment(offset, np.asarray(omegas, dtype=float), **kwargs)
