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
"""Norms and seminorms of sampled fields.

All norms are evaluated on the inner box of the grid (the ``band`` outermost cells on each side
are excluded): midpoint rule in space, trapezoid rule in time. Derivatives are centred
differences. Anisotropic norms follow the block splitting ``z = (x, y_1, ..., y_k)`` of a
:class:`~hypou.structure.BlockStructure`.
"""

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gamma as Gamma

from hypou.grid import Field, SpaceTimeGrid, gradient_entry, hessian_entry, inner_values
from hypou.structure import BlockStructure
from hypou.types import NormReport
from hypou.utils.exceptions import DimensionError, ExponentError

EXTENSIONS = ("zero", "periodic")
QUOTIENT_FRACTION = 0.25


@dataclass(frozen=True)
class TimeWeight:
    """Time weight ``g(t) = exp(-trace * t)``; ``trace = 0`` is the unweighted case."""

    trace: float = 0.0

    def __call__(self, t):
        return np.exp(-self.trace * np.asarray(t, dtype=float))

    @property
    def descriptor(self) -> str:
        """Short description used in reports."""
        return "1" if self.trace == 0.0 else f"exp(-{self.trace:.17g} t)"


def ou_weight(A) -> TimeWeight:
    """The measure weight ``det(e^{-tA}) = exp(-t Tr A)``."""
    A = np.asarray(A, dtype=float)
    return TimeWeight(float(np.trace(A)))


def _check_p(p: float) -> float:
    p = float(p)
    if not 1.0 < p < np.inf:
        raise ValueError(f"Integrability exponent must lie in (1, inf), got {p}")
    return p


def _weight(weight: Optional[Callable]) -> Callable:
    return weight if weight is not None else TimeWeight()


def _descriptor(weight: Optional[Callable]) -> str:
    return getattr(weight, "descriptor", "custom") if weight is not None else "1"


def _lp_of_magnitude(magnitude: np.ndarray, grid: SpaceTimeGrid, p: float, weight) -> float:
    """``(int int m^p g dt dz)^{1/p}`` for ``m`` given on the inner nodes of every time."""
    spatial = np.sum(np.abs(magnitude) ** p, axis=tuple(range(1, magnitude.ndim)))
    spatial = spatial * grid.cell_volume * _weight(weight)(grid.times)
    return float(trapezoid(spatial, grid.times) ** (1.0 / p))


def lp_norm(field: Field, p: float, weight: Optional[Callable] = None) -> float:
    """``(int_0^T int |u|^p g(t) dz dt)^{1/p}`` over the inner box.

    Args:
        field (Field): the field.
        p (float): exponent in ``(1, inf)``.
        weight (Optional[Callable]): time weight ``g``, e.g. :func:`ou_weight`; 1 by default.
    """
    p = _check_p(p)
    return _lp_of_magnitude(inner_values(field.values, field.grid), field.grid, p, weight)


def _block_axes(block: Union[BlockStructure, Sequence[int]], dim: int) -> Sequence[int]:
    axes = block.axes(0) if isinstance(block, BlockStructure) else tuple(int(a) for a in block)
    if not axes or any(not 0 <= a < dim for a in axes):
        raise DimensionError(f"Block axes {axes} outside 0..{dim - 1}")
    return axes


def gradient_block(values: np.ndarray, grid: SpaceTimeGrid, axes: Sequence[int]) -> np.ndarray:
    """Centred gradient along ``axes`` on the inner box; components on the last axis."""
    return np.stack([gradient_entry(values, grid, a) for a in axes], axis=-1)


def hessian_block(values: np.ndarray, grid: SpaceTimeGrid, axes: Sequence[int]) -> np.ndarray:
    """Centred Hessian block on the inner box, shape ``inner + (d, d)``."""
    rows = []
    for a in axes:
        rows.append(np.stack([hessian_entry(values, grid, a, b) for b in axes], axis=-1))
    return np.stack(rows, axis=-2)


def laplacian_block(values: np.ndarray, grid: SpaceTimeGrid, axes: Sequence[int]) -> np.ndarray:
    """Centred Laplacian along ``axes`` on the inner box."""
    total = hessian_entry(values, grid, axes[0], axes[0])
    for a in axes[1:]:
        total = total + hessian_entry(values, grid, a, a)
    return total


def d2_block_seminorm(
    field: Field,
    block: Union[BlockStructure, Sequence[int]],
    p: float,
    weight: Optional[Callable] = None,
) -> float:
    """``|| B_I D^2 u B_I ||_{L^p}``: the Frobenius magnitude of a Hessian block.

    Args:
        field (Field): the field; its grid needs a band of at least one cell.
        block (Union[BlockStructure, Sequence[int]]): the block axes, or a block structure whose
            non-degenerate block ``x`` is used.
        p (float): exponent in ``(1, inf)``.
        weight (Optional[Callable]): time weight.
    """
    p = _check_p(p)
    axes = _block_axes(block, field.grid.dim)
    hess = hessian_block(field.values, field.grid, axes)
    magnitude = np.sqrt(np.sum(hess**2, axis=(-2, -1)))
    return _lp_of_magnitude(magnitude, field.grid, p, weight)


def _kernel_constant(d: int, beta: float) -> float:
    """Constant ``C_{d,beta}`` of the fractional Laplacian for the bare kernel.

    ``(-Delta)^beta u = C_{d,beta} p.v. int (u(z) - u(z + w)) |w|^{-d-2beta} dw``.
    """
    return 4.0**beta * Gamma(0.5 * d + beta) / (np.pi ** (0.5 * d) * abs(Gamma(-beta)))


def _spectral_frac(u: np.ndarray, axes, beta: float, h, pad: bool) -> np.ndarray:
    if pad:
        widths = [(m, m) if a in axes else (0, 0) for a, m in enumerate(u.shape)]
        work = np.pad(u, widths)
    else:
        work = u
    symbol = 0.0
    for a, s in zip(axes, h):
        k = 2.0 * np.pi * np.fft.fftfreq(work.shape[a], d=s)
        shape = [1] * u.ndim
        shape[a] = k.size
        symbol = symbol + k.reshape(shape) ** 2
    multiplier = -(symbol**beta) / _kernel_constant(len(axes), beta)
    out = np.real(np.fft.ifftn(multiplier * np.fft.fftn(work, axes=axes), axes=axes))
    if pad:
        out = out[
            tuple(slice(m, 2 * m) if a in axes else slice(None) for a, m in enumerate(u.shape))
        ]
    return out


def _product_integration_weights(n: int, h: float, beta: float) -> np.ndarray:
    """Weights ``c_m`` of ``int_h^{nh} G(w) w^{1-2beta} dw ~ sum_m c_m G(mh)``.

    ``G`` is interpolated linearly between consecutive nodes.
    """
    weights = np.zeros(n + 1)
    for m in range(1, n):
        a, b = m * h, (m + 1) * h
        j1 = (b ** (2 - 2 * beta) - a ** (2 - 2 * beta)) / (2 - 2 * beta)
        j2 = (b ** (3 - 2 * beta) - a ** (3 - 2 * beta)) / (3 - 2 * beta)
        slope = (j2 - m * h * j1) / h
        weights[m] += j1 - slope
        weights[m + 1] += slope
    return weights


def _zero_extended_frac_1d(u: np.ndarray, axis: int, beta: float, h: float) -> np.ndarray:
    """``p.v. int (u(z + w e) - u(z)) |w|^{-1-2beta} dw`` along one axis, ``u = 0`` off the box.

    With ``D(w) = u(z+w) + u(z-w) - 2u(z)`` and ``G(w) = D(w) / w^2`` the integral is
    ``int_0^inf G(w) w^{1-2beta} dw``: ``G`` is frozen at ``G(h)`` on ``[0, h]``, linear between
    nodes on ``[h, nh]``, and beyond ``nh`` both neighbours are off the box so that
    ``D = -2u(z)`` integrates in closed form.
    """
    n = u.shape[axis]
    moved = np.moveaxis(u, axis, -1)
    padded = np.pad(moved, [(0, 0)] * (moved.ndim - 1) + [(n, n)])
    weights = _product_integration_weights(n, h, beta)
    weights[1] += h ** (2 - 2 * beta) / (2 - 2 * beta)
    out = np.zeros_like(moved)
    for m in range(1, n + 1):
        D = padded[..., n + m : 2 * n + m] + padded[..., n - m : 2 * n - m] - 2.0 * moved
        out += weights[m] * D / (m * h) ** 2
    out -= moved * (n * h) ** (-2.0 * beta) / beta
    return np.moveaxis(out, -1, axis)


def frac_laplacian(
    u: np.ndarray,
    i: int,
    beta: float,
    bs: BlockStructure,
    grid: SpaceTimeGrid,
    extension: str = "zero",
) -> np.ndarray:
    """Fractional Laplacian of a slice along block ``i`` with the bare kernel.

    ``p.v. int_{R^{d_i}} [u(z + E_i w) - u(z)] |w|^{-d_i - 2 beta} dw`` at every node of the slice.

    Args:
        u (np.ndarray): spatial slice of shape ``grid.n``.
        i (int): block index (0 is ``x``).
        beta (float): order in ``(0, 1)``.
        bs (BlockStructure): block splitting.
        grid (SpaceTimeGrid): grid of the slice.
        extension (str): ``zero`` (``u = 0`` outside the box) or ``periodic``.

    Raises:
        ExponentError: if ``beta`` is outside ``(0, 1)``.
    """
    if not 0.0 < beta < 1.0:
        raise ExponentError(f"Fractional order must lie in (0, 1), got {beta}")
    if extension not in EXTENSIONS:
        raise ValueError(f"Unknown extension '{extension}', expected one of {EXTENSIONS}")
    u = np.asarray(u, dtype=float)
    if u.shape != grid.n:
        raise DimensionError(f"Slice of shape {u.shape}, grid expects {grid.n}")
    axes = bs.axes(i)
    h = [grid.spacing[a] for a in axes]
    if len(axes) == 1 and extension == "zero":
        return _zero_extended_frac_1d(u, axes[0], beta, h[0])
    return _spectral_frac(u, axes, beta, h, pad=extension == "zero")


def sobolev_seminorm(
    field: Field,
    bs: BlockStructure,
    p: float,
    weight: Optional[Callable] = None,
    extension: str = "zero",
) -> NormReport:
    """Anisotropic Sobolev seminorm of a field.

    ``(||Delta_x u||_p^p + sum_i ||Delta_{y_i}^{alpha_i} u||_p^p)^{1/p}``, with ``Delta_x`` by
    centred differences and the fractional powers by :func:`frac_laplacian`.

    Components are reported as ``dx``, ``y1``, ..., ``yk``.
    """
    p = _check_p(p)
    grid = field.grid
    if bs.N != grid.dim:
        raise DimensionError(f"Block structure of size {bs.N} on a grid of dimension {grid.dim}")
    components: Dict[str, float] = {
        "dx": _lp_of_magnitude(laplacian_block(field.values, grid, bs.axes(0)), grid, p, weight)
    }
    for i in range(1, bs.k + 1):
        frac = np.stack(
            [frac_laplacian(u, i, bs.alphas[i - 1], bs, grid, extension) for u in field.values]
        )
        components[f"y{i}"] = _lp_of_magnitude(inner_values(frac, grid), grid, p, weight)
    value = float(sum(c**p for c in components.values()) ** (1.0 / p))
    return NormReport(
        "sobolev_aniso", value, components, p, None, _descriptor(weight), grid.to_dict()
    )


def _shift_vectors(axes: Sequence[int], h: np.ndarray, radius: float, dim: int):
    """Integer shifts along ``axes`` of length in ``(0, radius]``, one of every pair ``+-s``."""
    reach = [max(1, int(np.floor(radius / h[a] + 1e-9))) for a in axes]
    for steps in itertools.product(*[range(-r, r + 1) for r in reach]):
        nonzero = [s for s in steps if s != 0]
        if not nonzero or nonzero[0] < 0:
            continue
        shift = np.zeros(dim, dtype=int)
        shift[list(axes)] = steps
        length = float(np.linalg.norm(shift * h))
        if length <= radius * (1.0 + 1e-12):
            yield shift, length


def _window(shape, shift, sign: int = 1):
    """Slices pairing node ``z`` with ``z + sign * shift`` inside an array of ``shape``."""
    base, moved = [], []
    for m, s in zip(shape, shift):
        s = sign * int(s)
        if s >= 0:
            base.append(slice(0, m - s))
            moved.append(slice(s, m))
        else:
            base.append(slice(-s, m))
            moved.append(slice(0, m + s))
    return tuple(base), tuple(moved)


def _magnitude(arr: np.ndarray, spatial: int) -> np.ndarray:
    if arr.ndim == spatial:
        return np.abs(arr)
    return np.sqrt(np.sum(arr.reshape(arr.shape[:spatial] + (-1,)) ** 2, axis=-1))


def _quotient(arr: np.ndarray, h, axes, exponent: float, radius: float, zygmund: bool) -> float:
    """``sup |a(z) - a(z')| / |z - z'|^exponent`` over node pairs along ``axes`` within ``radius``.

    The Zygmund form uses ``|a(z + s) + a(z - s) - 2 a(z)| / |2s|^exponent`` instead. Trailing
    axes of ``arr`` beyond the spatial ones are vector components.
    """
    spatial = len(h)
    best = 0.0
    for shift, length in _shift_vectors(axes, np.asarray(h), radius, spatial):
        if zygmund:
            if 2.0 * length > radius * (1.0 + 1e-12):
                continue
            doubled = 2 * shift
            if any(abs(s) >= m for s, m in zip(doubled, arr.shape)):
                continue
            base, moved = _window(arr.shape[:spatial], doubled)
            centre = tuple(slice(b.start + s, b.stop + s) for b, s in zip(base, shift))
            diff = arr[moved] + arr[base] - 2.0 * arr[centre]
            distance = 2.0 * length
        else:
            if any(abs(s) >= m for s, m in zip(shift, arr.shape)):
                continue
            base, moved = _window(arr.shape[:spatial], shift)
            diff = arr[moved] - arr[base]
            distance = length
        if diff.size:
            best = max(best, float(np.max(_magnitude(diff, spatial))) / distance**exponent)
    return best


def holder_norm(u: np.ndarray, gamma: float, bs: BlockStructure, grid: SpaceTimeGrid) -> NormReport:
    """Anisotropic Hoelder-Zygmund norm of a slice with per-block exponents ``gamma/(1+2i)``.

    The ``x`` component sums the sup norms of the ``x`` derivatives up to order ``floor(gamma)``
    and the quotient of the highest one with exponent ``gamma - floor(gamma)`` (the midpoint
    Zygmund quotient of the order ``gamma - 1`` derivative when ``gamma`` is an integer). The
    ``y_i`` components are plain quotients with exponent ``gamma / (1 + 2i) < 1``. Pairs are
    searched up to a quarter of the inner box, so every quotient is a lower bound of its true
    supremum. The value is ``sup |u|`` plus all block components.

    Raises:
        ExponentError: if ``gamma`` is outside ``(0, 3)``.
    """
    if not 0.0 < gamma < 3.0:
        raise ExponentError(f"Hoelder exponent must lie in (0, 3), got {gamma}")
    u = np.asarray(u, dtype=float)
    if u.shape != grid.n:
        raise DimensionError(f"Slice of shape {u.shape}, grid expects {grid.n}")
    inner = inner_values(u, grid)
    h = grid.spacing
    widths = [hi - lo for lo, hi in grid.inner_box]
    components = {"sup": float(np.max(np.abs(inner)))}

    x_axes = bs.axes(0)
    radius = QUOTIENT_FRACTION * min(widths[a] for a in x_axes)
    order = int(np.floor(gamma))
    zygmund = gamma == order
    if zygmund:
        order -= 1
    derivatives = [inner]
    if order >= 1:
        derivatives.append(gradient_block(u, grid, x_axes))
    if order >= 2:
        derivatives.append(hessian_block(u, grid, x_axes))
    total = sum(float(np.max(_magnitude(d, grid.dim))) for d in derivatives[1:])
    top = derivatives[order]
    total += _quotient(top, h, x_axes, gamma - order if not zygmund else 1.0, radius, zygmund)
    components["x"] = total

    for i in range(1, bs.k + 1):
        axes = bs.axes(i)
        radius = QUOTIENT_FRACTION * min(widths[a] for a in axes)
        components[f"y{i}"] = _quotient(inner, h, axes, gamma / (1.0 + 2.0 * i), radius, False)
    value = float(sum(components.values()))
    return NormReport("holder_aniso", value, components, None, float(gamma), "1", grid.to_dict())
