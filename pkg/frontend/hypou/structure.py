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
"""Operator pairs (A, B): Kalman rank condition, canonical block structure and intrinsic scales.

The structure of an Ornstein-Uhlenbeck operator ``Tr(B D^2) + <Az, D>`` is read off the Krylov
blocks ``[B, AB, A^2 B, ...]``: their rank increments give the sizes of the degenerate blocks
``y_1, ..., y_k`` and the dilation exponents ``alpha_i = 1/(1+2i)``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import numpy as np

from hypou.types import StructureReport
from hypou.utils.exceptions import DimensionError, NotHypoellipticError, StructureError

RANK_TOL_FACTOR = 2.0**-40


def _numerical_rank(M: np.ndarray) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if not s.size or s[0] == 0.0:
        return 0
    tol = max(M.shape) * s[0] * RANK_TOL_FACTOR
    return int(np.sum(s > tol))


def kalman_rank(A, B, k_max: int) -> Tuple[int, Optional[int]]:
    """Rank of the Kalman matrix ``[B, AB, ..., A^{k_max} B]``.

    Each Krylov block is rescaled to unit Frobenius norm before the concatenation (this does not
    change the column space); blocks that vanish to rounding are dropped.

    Args:
        A (array_like): N x N drift matrix.
        B (array_like): N x N diffusion matrix.
        k_max (int): highest power of ``A``.

    Returns:
        Tuple[int, Optional[int]]: the rank and the smallest power at which the rank reaches
        ``N`` (``None`` if it never does).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or B.shape != A.shape:
        raise DimensionError(f"Expected square matrices of equal size, got {A.shape} and {B.shape}")
    if k_max < 0:
        raise ValueError("k_max must be non-negative")

    N = A.shape[0]
    scale_A = max(np.linalg.norm(A), 1.0)
    floor = np.finfo(float).eps * N * max(np.linalg.norm(B), 1.0)
    blocks: List[np.ndarray] = []
    power = B.copy()
    rank, minimal_k = 0, None
    for j in range(k_max + 1):
        norm = np.linalg.norm(power)
        if norm > floor * scale_A**j:
            blocks.append(power / norm)
            rank = _numerical_rank(np.hstack(blocks))
        if rank == N:
            minimal_k = j
            break
        power = A @ power
    return rank, minimal_k


@dataclass(frozen=True, eq=False)
class OUSystem:
    """An Ornstein-Uhlenbeck operator ``Tr(B D^2) + <Az, D>`` with ``B = blockdiag(B0, 0)``.

    Args:
        A (array_like): N x N drift matrix.
        B0 (array_like): d0 x d0 symmetric positive definite diffusion block.
        nu (float): ellipticity bound, the eigenvalues of ``B0`` lie in ``[nu, 1/nu]``.
        permissive (bool): accept pairs violating the Kalman condition (used by the checker).

    Raises:
        DimensionError: on inconsistent shapes.
        NotHypoellipticError: if the Kalman condition fails and ``permissive`` is not set.
    """

    A: np.ndarray
    B0: np.ndarray
    nu: float = 1.0
    permissive: bool = False

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B0 = np.atleast_2d(np.asarray(self.B0, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B0", B0)

        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"Drift matrix must be square, got shape {A.shape}")
        if B0.ndim != 2 or B0.shape[0] != B0.shape[1]:
            raise DimensionError(f"Diffusion block must be square, got shape {B0.shape}")
        if not 1 <= B0.shape[0] <= A.shape[0]:
            raise DimensionError(f"Diffusion block of size {B0.shape[0]} does not fit N={self.N}")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"Ellipticity bound must lie in (0, 1], got {self.nu}")
        if not np.allclose(B0, B0.T, rtol=0.0, atol=1e-12):
            raise ValueError("Diffusion block B0 must be symmetric")
        w = np.linalg.eigvalsh(B0)
        if w[0] < self.nu * (1.0 - 1e-12) or w[-1] > (1.0 + 1e-12) / self.nu:
            raise ValueError(
                f"Eigenvalues of B0 ({w[0]:.4g} .. {w[-1]:.4g}) leave [nu, 1/nu] for nu={self.nu}"
            )
        if not self.permissive and not self.is_hypoelliptic:
            rank = kalman_rank(A, self.B, self.N - 1)[0]
            raise NotHypoellipticError(f"Kalman rank {rank} < N={self.N}: (A, B) not hypoelliptic")

    @property
    def N(self) -> int:
        """Space dimension."""
        return self.A.shape[0]

    @property
    def d0(self) -> int:
        """Size of the non-degenerate block."""
        return self.B0.shape[0]

    @property
    def d1(self) -> int:
        """Number of degenerate directions."""
        return self.N - self.d0

    @cached_property
    def B(self) -> np.ndarray:
        """Full diffusion matrix ``blockdiag(B0, 0)``."""
        B = np.zeros((self.N, self.N))
        B[: self.d0, : self.d0] = self.B0
        return B

    @cached_property
    def is_hypoelliptic(self) -> bool:
        """Whether the Kalman rank condition holds."""
        return kalman_rank(self.A, self.B, self.N - 1)[0] == self.N

    def to_dict(self) -> Dict:
        """System descriptor."""
        return {
            "N": self.N,
            "d0": self.d0,
            "A": self.A.tolist(),
            "B0": self.B0.tolist(),
            "nu": float(self.nu),
        }

    @classmethod
    def from_dict(cls, desc: Dict, permissive: bool = False) -> "OUSystem":
        """Build a system from its descriptor ``{"N", "d0", "A", "B0", "nu"}``."""
        unknown = set(desc) - {"N", "d0", "A", "B0", "nu"}
        if unknown:
            raise ValueError(f"Unknown system descriptor keys: {sorted(unknown)}")
        system = cls(desc["A"], desc["B0"], nu=desc.get("nu", 1.0), permissive=permissive)
        if "N" in desc and desc["N"] != system.N:
            raise DimensionError(f"Descriptor declares N={desc['N']} but A has size {system.N}")
        if "d0" in desc and desc["d0"] != system.d0:
            raise DimensionError(f"Descriptor declares d0={desc['d0']} but B0 has size {system.d0}")
        return system


@dataclass(frozen=True, eq=False)
class BlockStructure:
    """Canonical block splitting ``z = (x, y_1, ..., y_k)`` of an operator pair.

    ``embeddings`` holds the column-selection matrices ``E_0, ..., E_k`` (``E_0`` selects ``x``)
    so that ``sum_i E_i E_i^T = I_N``.
    """

    N: int
    d0: int
    k: int
    block_sizes: Tuple[int, ...]
    embeddings: Tuple[np.ndarray, ...] = field(repr=False)
    alphas: Tuple[float, ...]

    @property
    def sizes(self) -> Tuple[int, ...]:
        """Sizes of all blocks, block 0 included."""
        return (self.d0,) + tuple(self.block_sizes)

    @property
    def offsets(self) -> Tuple[int, ...]:
        """First coordinate of every block."""
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)[:-1]]))

    def axes(self, i: int) -> Tuple[int, ...]:
        """Coordinate indices of block ``i`` (block 0 is ``x``)."""
        if not 0 <= i <= self.k:
            raise IndexError(f"Block index {i} outside 0..{self.k}")
        start = self.offsets[i]
        return tuple(range(start, start + self.sizes[i]))

    def exponent(self, i: int) -> float:
        """Dilation exponent of block ``i``; 1 for the non-degenerate block."""
        return 1.0 if i == 0 else self.alphas[i - 1]


def extract_block_structure(system: OUSystem) -> BlockStructure:
    """Block structure of a hypoelliptic system given in canonical coordinates.

    Raises:
        NotHypoellipticError: if the Kalman condition fails.
        StructureError: if a subdiagonal block of ``A`` does not have full rank, or ``A`` has
            non-zero entries below the subdiagonal blocks.
    """
    N, d0 = system.N, system.d0
    ranks = [kalman_rank(system.A, system.B, j)[0] for j in range(N)]
    if ranks[-1] < N:
        raise NotHypoellipticError(f"Kalman rank {ranks[-1]} < N={N}")
    if ranks[0] != d0:
        raise StructureError(f"rank(B)={ranks[0]} differs from the diffusion block size {d0}")

    block_sizes = []
    for j in range(1, N):
        increment = ranks[j] - ranks[j - 1]
        if increment == 0:
            break
        block_sizes.append(increment)
    k = len(block_sizes)
    sizes = [d0] + block_sizes
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    A = system.A
    for i in range(1, k + 1):
        rows = slice(offsets[i], offsets[i + 1])
        sub = A[rows, offsets[i - 1] : offsets[i]]
        if _numerical_rank(sub) != sizes[i]:
            raise StructureError(
                f"Subdiagonal block {i} of A has rank {_numerical_rank(sub)}, expected {sizes[i]}"
            )
        if offsets[i - 1] > 0 and np.any(A[rows, : offsets[i - 1]] != 0.0):
            raise StructureError(f"Block row {i} of A has entries below the subdiagonal block")

    eye = np.eye(N)
    embeddings = tuple(eye[:, offsets[i] : offsets[i + 1]] for i in range(k + 1))
    alphas = tuple(1.0 / (1.0 + 2.0 * i) for i in range(1, k + 1))
    return BlockStructure(N, d0, k, tuple(block_sizes), embeddings, alphas)


def scale_matrix(v: float, bs: BlockStructure) -> np.ndarray:
    """Dilation matrix ``T_v = diag(v I_{d0}, v^2 I_{d1}, ..., v^{k+1} I_{dk})``."""
    if v <= 0:
        raise ValueError(f"Scale must be positive, got {v}")
    powers = [np.full(size, float(v) ** (i + 1)) for i, size in enumerate(bs.sizes)]
    return np.diag(np.concatenate(powers))


def anisotropic_distance(z, zp, bs: BlockStructure):
    """``d(z, z') = |x - x'| + sum_i |y_i - y_i'|^{1/(1+2i)}``, vectorized over leading axes."""
    diff = np.asarray(z, dtype=float) - np.asarray(zp, dtype=float)
    if diff.shape[-1] != bs.N:
        raise DimensionError(f"Points must have {bs.N} coordinates, got {diff.shape[-1]}")
    total = np.zeros(diff.shape[:-1])
    for i in range(bs.k + 1):
        part = np.linalg.norm(diff[..., list(bs.axes(i))], axis=-1)
        total = total + part ** bs.exponent(i)
    return total if total.ndim else float(total)


def is_homogeneous(system: OUSystem, bs: BlockStructure) -> bool:
    """Whether the diagonal and strictly upper blocks of ``A`` vanish."""
    for i in range(bs.k + 1):
        for j in range(i, bs.k + 1):
            block = system.A[np.ix_(bs.axes(i), bs.axes(j))]
            if np.any(block != 0.0):
                return False
    return True


def structure_report(system: OUSystem) -> StructureReport:
    """Hypoellipticity verdict and, when it holds, the block structure."""
    rank, minimal_k = kalman_rank(system.A, system.B, system.N - 1)
    if rank < system.N:
        return StructureReport(False, None, [], [], rank, minimal_k)
    bs = extract_block_structure(system)
    return StructureReport(True, bs.k, list(bs.block_sizes), list(bs.alphas), rank, minimal_k)
