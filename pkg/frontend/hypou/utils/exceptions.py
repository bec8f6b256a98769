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
"""Custom hypou exceptions.

Every error raised on purpose by the library derives from :class:`HypoUError` and carries a short
machine-readable ``code`` which the command-line driver reports verbatim.
"""


class HypoUError(Exception):
    """Base class of all hypou errors."""

    code = "hypou"


class DimensionError(HypoUError, ValueError):
    """Matrix or point shapes do not fit together."""

    code = "dimension"


class StructureError(HypoUError):
    """The drift matrix is not in the canonical block form expected for the diffusion."""

    code = "structure"


class NotHypoellipticError(StructureError):
    """The pair (A, B) violates the Kalman rank condition."""

    code = "not-hypoelliptic"


class QuadratureError(HypoUError):
    """Adaptive quadrature did not reach the requested tolerance."""

    code = "quadrature"


class SingularCovariance(HypoUError):
    """A Gaussian covariance is too ill-conditioned to define a density."""

    code = "singular-covariance"


class CoverageError(HypoUError):
    """A grid box is too small for the support that has to be sampled."""

    code = "coverage"


class SplitStepError(HypoUError):
    """The split step of a finite-difference solve violates lambda * dt <= 1/2."""

    code = "split-step"


class MonteCarloBudgetError(HypoUError):
    """A Monte Carlo request exceeds the configured path budget."""

    code = "mc-budget"


class ExponentError(HypoUError):
    """A Hoelder or fractional exponent outside of the supported range."""

    code = "exponent"


class ClassError(HypoUError):
    """The operator is outside of the class an experiment is stated for."""

    code = "class"


class ConfigError(HypoUError):
    """Invalid run configuration."""

    code = "config"


class NonmonotoneConvergence(UserWarning):
    """Errors along an epsilon ladder did not decrease."""
