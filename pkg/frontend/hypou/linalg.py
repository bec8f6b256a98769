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
"""Small dense linear-algebra helpers: matrix exponentials and symmetric non-negative matrices."""

import numpy as np
from scipy import linalg as sla

TOL_PSD = 1e-10


def matrix_exp(A, t: float = 1.0) -> np.ndarray:
    """Return ``exp(t A)``.

    Args:
        A (array_like): square matrix.
        t (float): time multiplier.
    """
    A = np.asarray(A, dtype=float)
    if t == 0.0 or not np.any(A):
        return np.eye(A.shape[0])
    return sla.expm(t * A)


def symmetrize(M) -> np.ndarray:
    """Symmetric part of a square matrix."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def psd_project(M, tol: float = TOL_PSD) -> np.ndarray:
    """Clamp a numerically non-negative symmetric matrix onto the PSD cone.

    Eigenvalues down to ``-tol * max(1, |lambda|_max)`` are accepted and clamped at zero; a matrix
    that is already non-negative is returned as its symmetric part, unchanged.

    Raises:
        ValueError: if ``M`` has a genuinely negative eigenvalue.
    """
    sym = symmetrize(M)
    w, V = np.linalg.eigh(sym)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w[0] < -tol * scale:
        raise ValueError(f"Matrix is not positive semi-definite (min eigenvalue {w[0]:.3e})")
    if not w.size or w[0] >= 0.0:
        return sym
    return symmetrize((V * np.clip(w, 0.0, None)) @ V.T)


def psd_sqrt(M) -> np.ndarray:
    """Symmetric non-negative square root of a PSD matrix."""
    w, V = np.linalg.eigh(symmetrize(M))
    return symmetrize((V * np.sqrt(np.clip(w, 0.0, None))) @ V.T)


def psd_factor(M, rtol: float = 1e-13):
    """Principal factor ``F`` (N x r) with ``F F^T = M`` up to the dropped null directions.

    Directions whose eigenvalue is below ``rtol`` times the largest one are discarded, so ``r`` is
    the numerical rank of ``M``.
    """
    w, V = np.linalg.eigh(symmetrize(M))
    w = np.clip(w, 0.0, None)
    if not w.size or w[-1] <= 0.0:
        return np.zeros((len(w), 0))
    keep = w > rtol * w[-1]
    return V[:, keep] * np.sqrt(w[keep])


def spectral_norm(M) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(np.asarray(M, dtype=float), 2))
