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
"""Continuous paths of symmetric non-negative matrices, ``t -> Q(t)``.

Paths house the diffusion of driftless problems, their second-order perturbations and the
conjugated diffusions ``e^{tA} M(t) e^{tA*}`` produced by drift removal. Every path returns its
value projected onto the PSD cone (eigenvalues down to ``-TOL_PSD`` are clamped at zero).
"""

from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from hypou.linalg import TOL_PSD, matrix_exp, psd_project, psd_sqrt, symmetrize
from hypou.utils.exceptions import DimensionError


class TimePSDPath:
    """Base class of matrix paths.

    Args:
        dim (int): matrix size.
        T (float): horizon; ``np.inf`` for paths defined for all times.
    """

    kind = "abstract"

    def __init__(self, dim: int, T: float = np.inf):
        if dim < 1:
            raise DimensionError(f"Matrix size must be positive, got {dim}")
        self.dim = int(dim)
        self.T = float(T)

    def _raw(self, t: float) -> np.ndarray:
        raise NotImplementedError()

    def evaluate(self, t: float) -> np.ndarray:
        """Symmetric non-negative value at time ``t``."""
        return psd_project(self._raw(float(t)), TOL_PSD)

    def __call__(self, t: float) -> np.ndarray:
        return self.evaluate(t)

    def kinks(self, s: float = 0.0, t: float = np.inf) -> Tuple[float, ...]:
        """Times in ``(s, t)`` at which the path may fail to be differentiable."""
        return ()

    def is_zero(self) -> bool:
        """Whether the path vanishes identically."""
        return False

    def continuity_certificate(self, T: Optional[float] = None, n: int = 257) -> float:
        """Largest Frobenius jump between ``n`` equispaced samples of ``[0, T]``."""
        horizon = self.T if T is None else float(T)
        if not np.isfinite(horizon):
            raise ValueError("A finite horizon is required for the continuity certificate")
        values = np.stack([self.evaluate(t) for t in np.linspace(0.0, horizon, n)])
        return float(np.max(np.linalg.norm(np.diff(values, axis=0), axis=(1, 2)), initial=0.0))

    def to_dict(self) -> Dict:
        """JSON descriptor."""
        raise NotImplementedError()

    def __add__(self, other: "TimePSDPath") -> "SumPath":
        return SumPath([self, other])


class ConstantPath(TimePSDPath):
    """``Q(t) = M``."""

    kind = "constant"

    def __init__(self, matrix, T: float = np.inf):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"Expected a square matrix, got shape {matrix.shape}")
        super().__init__(matrix.shape[0], T)
        self.matrix = psd_project(matrix)

    def _raw(self, t):
        return self.matrix

    def evaluate(self, t):
        return self.matrix

    def is_zero(self):
        return not np.any(self.matrix)

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}


def zero_path(dim: int) -> ConstantPath:
    """The vanishing path of size ``dim``."""
    return ConstantPath(np.zeros((dim, dim)))


class SampledPath(TimePSDPath):
    """Piecewise-linear interpolation of PSD samples; constant outside the sampled range."""

    kind = "samples"

    def __init__(self, times: Sequence[float], matrices: Sequence):
        times = np.asarray(times, dtype=float)
        matrices = np.asarray(matrices, dtype=float)
        if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("Sample times must be a strictly increasing list of length >= 2")
        if matrices.ndim != 3 or matrices.shape[0] != len(times):
            raise DimensionError("Expected one square matrix per sample time")
        super().__init__(matrices.shape[1], times[-1])
        self.times = times
        self.matrices = np.stack([psd_project(m) for m in matrices])

    def _raw(self, t):
        if t <= self.times[0]:
            return self.matrices[0]
        if t >= self.times[-1]:
            return self.matrices[-1]
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        s = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        return (1.0 - s) * self.matrices[j] + s * self.matrices[j + 1]

    def kinks(self, s=0.0, t=np.inf):
        return tuple(float(r) for r in self.times[1:-1] if s < r < t)

    def is_zero(self):
        return not np.any(self.matrices)

    def to_dict(self):
        return {"kind": self.kind, "times": self.times.tolist(), "matrices": self.matrices.tolist()}


class SinusoidalPath(TimePSDPath):
    """``Q(t) = M0 + (1 + sin(2 pi t / period)) / 2 * M1`` with ``M0, M1`` PSD."""

    kind = "sinusoidal"

    def __init__(self, base, amplitude, period: float):
        base = psd_project(np.atleast_2d(base))
        amplitude = psd_project(np.atleast_2d(amplitude))
        if base.shape != amplitude.shape:
            raise DimensionError("Base and amplitude matrices differ in shape")
        if period <= 0:
            raise ValueError("Period must be positive")
        super().__init__(base.shape[0])
        self.base, self.amplitude, self.period = base, amplitude, float(period)

    def _raw(self, t):
        return self.base + 0.5 * (1.0 + np.sin(2.0 * np.pi * t / self.period)) * self.amplitude

    def to_dict(self):
        return {
            "kind": self.kind,
            "base": self.base.tolist(),
            "amplitude": self.amplitude.tolist(),
            "period": self.period,
        }


class VanishingRankOnePath(TimePSDPath):
    """``Q(t) = max(0, sin(2 pi t / period)) v v^T``, zero on half of each period."""

    kind = "rank1-vanishing"

    def __init__(self, vector, period: float):
        vector = np.asarray(vector, dtype=float).ravel()
        if period <= 0:
            raise ValueError("Period must be positive")
        super().__init__(vector.size)
        self.vector, self.period = vector, float(period)
        self._outer = np.outer(vector, vector)

    def _raw(self, t):
        return max(0.0, np.sin(2.0 * np.pi * t / self.period)) * self._outer

    def kinks(self, s=0.0, t=np.inf):
        half = 0.5 * self.period
        first = int(np.floor(s / half)) + 1
        last = int(np.ceil(min(t, 1e6 * half) / half))
        return tuple(half * j for j in range(first, last) if s < half * j < t)

    def is_zero(self):
        return not np.any(self.vector)

    def to_dict(self):
        return {"kind": self.kind, "vector": self.vector.tolist(), "period": self.period}


class ConjugatedPath(TimePSDPath):
    """``t -> e^{tA} M(t) e^{tA*}``, the diffusion seen in drift-free coordinates."""

    kind = "conjugated"

    def __init__(self, A, inner: TimePSDPath):
        A = np.asarray(A, dtype=float)
        if A.shape != (inner.dim, inner.dim):
            raise DimensionError(f"Drift of shape {A.shape} does not match path size {inner.dim}")
        super().__init__(inner.dim, inner.T)
        self.A, self.inner = A, inner

    def _raw(self, t):
        E = matrix_exp(self.A, t)
        return symmetrize(E @ self.inner.evaluate(t) @ E.T)

    def kinks(self, s=0.0, t=np.inf):
        return self.inner.kinks(s, t)

    def is_zero(self):
        return self.inner.is_zero()

    def to_dict(self):
        return {"kind": self.kind, "A": self.A.tolist(), "inner": self.inner.to_dict()}


class SumPath(TimePSDPath):
    """Sum of paths of equal size."""

    kind = "sum"

    def __init__(self, paths: Iterable[TimePSDPath]):
        paths = list(paths)
        if not paths:
            raise ValueError("SumPath needs at least one term")
        if len({p.dim for p in paths}) != 1:
            raise DimensionError("Summed paths differ in size")
        super().__init__(paths[0].dim, min(p.T for p in paths))
        self.paths = paths

    def _raw(self, t):
        total = self.paths[0].evaluate(t)
        for p in self.paths[1:]:
            total = total + p.evaluate(t)
        return total

    def kinks(self, s=0.0, t=np.inf):
        return tuple(sorted({k for p in self.paths for k in p.kinks(s, t)}))

    def is_zero(self):
        return all(p.is_zero() for p in self.paths)

    def to_dict(self):
        return {"kind": self.kind, "terms": [p.to_dict() for p in self.paths]}


class DirectionalPath(TimePSDPath):
    """``l_k(t) l_k(t)^T`` with ``l_k(t) = sqrt(M(t)) e_k`` the ``k``-th column of the PSD root.

    Summing the directional paths over ``k`` gives back ``M(t)``.
    """

    kind = "directional"

    def __init__(self, inner: TimePSDPath, k: int):
        if not 0 <= k < inner.dim:
            raise IndexError(f"Direction {k} outside 0..{inner.dim - 1}")
        super().__init__(inner.dim, inner.T)
        self.inner, self.k = inner, int(k)

    def direction(self, t: float) -> np.ndarray:
        """The vector ``l_k(t)``."""
        return psd_sqrt(self.inner.evaluate(t))[:, self.k]

    def _raw(self, t):
        l = self.direction(t)
        return np.outer(l, l)

    def kinks(self, s=0.0, t=np.inf):
        return self.inner.kinks(s, t)

    def is_zero(self):
        return self.inner.is_zero()

    def to_dict(self):
        return {"kind": self.kind, "k": self.k, "inner": self.inner.to_dict()}


def direction_sampler(path: TimePSDPath, k: int) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized ``times -> l_k(times)`` of shape ``(len(times), dim)``.

    Constant paths are factorized once.
    """
    if isinstance(path, ConstantPath):
        l = psd_sqrt(path.matrix)[:, k]
        return lambda times: np.broadcast_to(l, (np.size(times), path.dim)).copy()
    directional = DirectionalPath(path, k)
    return lambda times: np.stack([directional.direction(t) for t in np.atleast_1d(times)])


def path_from_dict(desc: Dict) -> TimePSDPath:
    """Build a path from its JSON descriptor."""
    kind = desc.get("kind")
    builders: Dict[str, Callable[[Dict], TimePSDPath]] = {
        "constant": lambda d: ConstantPath(d["matrix"]),
        "samples": lambda d: SampledPath(d["times"], d["matrices"]),
        "sinusoidal": lambda d: SinusoidalPath(d["base"], d["amplitude"], d["period"]),
        "rank1-vanishing": lambda d: VanishingRankOnePath(d["vector"], d["period"]),
        "conjugated": lambda d: ConjugatedPath(d["A"], path_from_dict(d["inner"])),
        "sum": lambda d: SumPath(path_from_dict(t) for t in d["terms"]),
        "directional": lambda d: DirectionalPath(path_from_dict(d["inner"]), d["k"]),
    }
    if kind not in builders:
        raise ValueError(f"Unknown path kind '{kind}', expected one of {sorted(builders)}")
    try:
        return builders[kind](desc)
    except KeyError as e:
        raise ValueError(f"Path descriptor of kind '{kind}' misses key {e}") from e


def max_direction_norm(paths: List[TimePSDPath], T: float, n: int = 129) -> float:
    """Sampled ``max_t |l(t)|`` over the diagonal of a list of paths (for error bounds)."""
    best = 0.0
    for p in paths:
        for t in np.linspace(0.0, T, n):
            best = max(best, float(np.sqrt(np.max(np.diag(p.evaluate(t))))))
    return best
