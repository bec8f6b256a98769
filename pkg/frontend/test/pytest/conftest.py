# Copyright 2023 The hypou developers

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at

#     http://www.apache.org/licenses/LICENSE-2.0

# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""
Pytest configuration file for the hypou test suite.
"""
import numpy as np
import pytest

from hypou.grid import SpaceTimeGrid
from hypou.options import SolverConfig
from hypou.structure import OUSystem

# Monte Carlo comparisons are made in units of the reported standard error
TOL_STOCHASTIC = 3.0


@pytest.fixture(scope="session")
def tol_stochastic():
    """Number of standard errors allowed in stochastic comparisons."""
    return TOL_STOCHASTIC


@pytest.fixture
def kolmogorov():
    """``u_t = u_xx + x u_y``."""
    return OUSystem([[0.0, 0.0], [1.0, 0.0]], [[1.0]])


@pytest.fixture
def chain3():
    """Three-dimensional chain ``x -> y1 -> y2``."""
    return OUSystem([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[1.0]])


@pytest.fixture
def heat2():
    """Two-dimensional heat operator (no drift, full diffusion)."""
    return OUSystem(np.zeros((2, 2)), np.eye(2))


@pytest.fixture
def small_grid():
    """Coarse two-dimensional grid on a box large enough for unit bumps at T = 0.5."""
    return SpaceTimeGrid.centered(0.5, 8, [8.0, 8.0], [32, 32], band=2)


@pytest.fixture
def spectral():
    """Solver options selecting the spectral engine."""
    return SolverConfig(method="spectral")


def pytest_configure(config):
    """A pytest configure helper method"""

    config.addinivalue_line("markers", "slow: long-running acceptance tests")
