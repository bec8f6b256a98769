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
"""This module contains the solver options shared by the Gaussian, Poisson and harness layers,
together with the verbose-output and seed-derivation helpers.
"""
import sys
from copy import deepcopy
from dataclasses import dataclass
from io import TextIOWrapper
from typing import Optional

import numpy as np

METHODS = ("auto", "quadrature", "montecarlo", "spectral")


# pylint: disable=too-many-instance-attributes
@dataclass
class SolverConfig:
    """Solver options, for which reasonable default values exist.

    Args:
        verbose (Optional[bool]): flag indicating whether to enable verbose output.
            Default is ``False``
        logfile (Optional[TextIOWrapper]): the logfile to write output to.
            Default is ``sys.stderr``
        method (Optional[str]): spatial averaging method, one of ``auto``, ``quadrature``,
            ``montecarlo`` or ``spectral``. ``auto`` picks quadrature up to three dimensions
            and Monte Carlo above.
        n_nodes (Optional[int]): Gauss-Hermite nodes per whitened coordinate. Default is ``9``.
        n_paths (Optional[int]): Monte Carlo sample count, rounded up to an even number since
            samples come in antithetic pairs. Default is ``2000``.
        max_paths (Optional[int]): Monte Carlo budget; requests above it are rejected.
        substeps (Optional[int]): internal time sub-slices per output slice. Default is ``1``.
        split_dt (Optional[float]): explicit split step of finite-difference solves. By default
            the step is chosen so that ``lambda * dt <= 1/2``.
        quad_epsabs (Optional[float]): absolute tolerance of covariance integrals.
        quad_epsrel (Optional[float]): relative tolerance of covariance integrals.
        workers (Optional[int]): parallelism cap. Results never depend on it.
    """

    verbose: Optional[bool] = False
    logfile: Optional[TextIOWrapper] = sys.stderr
    method: Optional[str] = "auto"
    n_nodes: Optional[int] = 9
    n_paths: Optional[int] = 2000
    max_paths: Optional[int] = 100000
    substeps: Optional[int] = 1
    split_dt: Optional[float] = None
    quad_epsabs: Optional[float] = 1e-12
    quad_epsrel: Optional[float] = 1e-10
    workers: Optional[int] = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"Unknown solver method '{self.method}', expected one of {METHODS}")
        if self.n_nodes < 1 or self.n_paths < 2 or self.substeps < 1 or self.workers < 1:
            raise ValueError("Solver counts (n_nodes, n_paths, substeps, workers) must be positive")
        if self.split_dt is not None and self.split_dt <= 0:
            raise ValueError("split_dt must be positive")

    def __deepcopy__(self, memo):
        """Deep copy of every option; the logfile stays shared."""
        return SolverConfig(
            **{k: deepcopy(v, memo) for k, v in self.__dict__.items() if k != "logfile"},
            logfile=self.logfile,
        )

    @property
    def even_paths(self) -> int:
        """Number of Monte Carlo samples actually drawn."""
        return self.n_paths + (self.n_paths % 2)

    def resolved_method(self, dim: int) -> str:
        """Concrete averaging method for a problem of dimension ``dim``."""
        if self.method != "auto":
            return self.method
        return "quadrature" if dim <= 3 else "montecarlo"

    def descriptor(self) -> dict:
        """JSON-friendly summary used in field provenance."""
        return {
            "method": self.method,
            "n_nodes": self.n_nodes,
            "n_paths": self.n_paths,
            "substeps": self.substeps,
            "split_dt": self.split_dt,
        }


def log_verbose(cfg: Optional[SolverConfig], tag: str, message: str) -> None:
    """Print a tagged progress line when verbose output is enabled.

    Args:
        cfg (Optional[SolverConfig]): solver options; nothing is printed for ``None``.
        tag (str): short upper-case tag, e.g. ``SOLVE``.
        message (str): the line to print.
    """
    if cfg is not None and cfg.verbose:
        print(f"[{tag}] {message}", file=cfg.logfile)


def path_seed(master: int, index: int) -> np.random.SeedSequence:
    """Seed of the ``index``-th random path derived from a master seed.

    The derived streams only depend on ``(master, index)``, never on the order in which workers
    happen to pick the paths up.
    """
    return np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))


def derived_int_seed(master: int, index: int) -> int:
    """Integer seed for nested runs (one per suite entry)."""
    return int(path_seed(master, index).generate_state(1, dtype=np.uint32)[0])
