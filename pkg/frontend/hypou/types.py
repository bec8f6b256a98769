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
"""Report data type definitions.

Every report serializes to JSON through ``dataclasses_json``. Wall-clock runtimes are carried on
the objects but excluded from the JSON so that reports are byte-reproducible; the command-line
driver writes them to a separate timings file.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from dataclasses_json import config, dataclass_json

_EXCLUDED = config(exclude=lambda _: True)


@dataclass_json
@dataclass
class StructureReport:
    """Kalman verdict and block structure of an operator pair."""

    hypoelliptic: bool
    k: Optional[int]
    blocks: List[int]
    alphas: List[float]
    kalman_rank: int
    minimal_k: Optional[int]


@dataclass_json
@dataclass
class NormReport:
    """Value of a norm or seminorm of a field.

    Fields:
        kind: one of ``lp``, ``d2x_lp``, ``sobolev_aniso``, ``holder_aniso``
        value: the total value
        components: per-part values (``dx``, ``y1``, ... or ``sup``, ``x``, ``y1``, ...)
        p: integrability exponent, if any
        exponent: Hoelder or fractional exponent, if any
        weight: descriptor of the time weight
        grid: descriptor of the grid the field lives on
    """

    kind: str
    value: float
    components: Dict[str, float] = field(default_factory=dict)
    p: Optional[float] = None
    exponent: Optional[float] = None
    weight: str = "1"
    grid: Dict[str, Any] = field(default_factory=dict)


@dataclass_json
@dataclass
class ConvergenceRow:
    """One entry of an epsilon ladder."""

    epsilon: float
    sup_error: float
    l2_error: float
    apriori_bound: Optional[float] = None
    runtime_s: float = field(default=0.0, metadata=_EXCLUDED)


@dataclass_json
@dataclass
class ConvergenceStudy:
    """Error-versus-epsilon table with its fitted log-log slope."""

    mode: str
    rows: List[ConvergenceRow]
    slope: float
    final_relative_error: float
    monotone: bool


@dataclass_json
@dataclass
class MaxPrincipleRow:
    """Check of ``sup|v| <= T sup|f|`` for one solved field."""

    name: str
    sup_field: float
    bound: float
    passed: bool


# pylint: disable=too-many-instance-attributes
@dataclass_json
@dataclass
class StabilityReport:
    """Empirical constants of an estimate with and without second-order perturbations.

    Fields:
        estimator: names of the output seminorm and of the input norm
        sources: names of the sources (rows of ``ratios``)
        perturbations: names of the perturbations (columns of ``ratios``)
        ratios: output/input ratio for every (source, perturbation) pair
        c_hat_base: largest ratio without perturbation
        margin: largest ratio over all pairs divided by ``c_hat_base``
        argmax: the (source, perturbation) pair attaining ``margin``
        delta: admissible slack; the report passes when ``margin <= 1 + delta``
    """

    estimator: List[str]
    sources: List[str]
    perturbations: List[str]
    ratios: List[List[float]]
    c_hat_base: float
    margin: float
    argmax: List[str]
    delta: float
    passed: bool
    mode: str
    seeds: List[int]
    grid: Dict[str, Any]
    max_principle: List[MaxPrincipleRow] = field(default_factory=list)
    runtimes: Dict[str, float] = field(default_factory=dict, metadata=_EXCLUDED)


@dataclass_json
@dataclass
class ExpectationReport:
    """Monte Carlo check of a Poisson expectation identity."""

    name: str
    lhs: float
    rhs: float
    std_error: float
    z_score: float
    n_paths: int
    passed: bool


@dataclass_json
@dataclass
class KSReport:
    """Kolmogorov-Smirnov test of inter-arrival times against the exponential law."""

    statistic: float
    critical_value: float
    pvalue: float
    n: int
    passed: bool
