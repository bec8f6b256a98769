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
This package contains solvers and experiment harnesses for hypoelliptic Ornstein-Uhlenbeck
operators with time-dependent second-order perturbations.
"""

# pylint: disable=wrong-import-position

import jax as _jax

# Density Hessians are differentiated with jax and compared against float64 numpy values.
_jax.config.update("jax_enable_x64", True)

from hypou._version import __version__
from hypou.gaussian import (
    covariance_integral,
    ou_covariance,
    ou_density,
    ou_density_hessian_x,
    solve_driftless,
    solve_ou,
)
from hypou.grid import Field, SpaceTimeGrid
from hypou.harness import (
    epsilon_convergence_study,
    estimate_constant,
    norm_pair,
    stability_experiment,
)
from hypou.norms import holder_norm, lp_norm, sobolev_seminorm
from hypou.options import SolverConfig
from hypou.paths import ConstantPath, TimePSDPath
from hypou.poisson import averaged_shifted_solve, perturbed_solve_iterative, solve_fd_two
from hypou.sources import BumpSource, SourceFunction
from hypou.structure import OUSystem, extract_block_structure, structure_report
from hypou.utils.exceptions import HypoUError

__all__ = (
    "__version__",
    "OUSystem",
    "extract_block_structure",
    "structure_report",
    "TimePSDPath",
    "ConstantPath",
    "SourceFunction",
    "BumpSource",
    "SpaceTimeGrid",
    "Field",
    "SolverConfig",
    "covariance_integral",
    "ou_covariance",
    "ou_density",
    "ou_density_hessian_x",
    "solve_driftless",
    "solve_ou",
    "solve_fd_two",
    "averaged_shifted_solve",
    "perturbed_solve_iterative",
    "lp_norm",
    "sobolev_seminorm",
    "holder_norm",
    "norm_pair",
    "estimate_constant",
    "stability_experiment",
    "epsilon_convergence_study",
    "HypoUError",
)
