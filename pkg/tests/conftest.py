import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spillback.dynamics import solve_equilibrium  # noqa: E402
from spillback.specfile import load_spec  # noqa: E402


@pytest.fixture(scope="session")
def fig1():
    return load_spec("figure1")


@pytest.fixture(scope="session")
def fig1_rho0(fig1):
    return solve_equilibrium(fig1.topology, fig1.policy, fig1.lambda0)


@pytest.fixture(scope="session")
def single():
    return load_spec("single-link")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
