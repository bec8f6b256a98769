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
"""Space-time grids and the fields sampled on them."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from hypou.utils.exceptions import DimensionError

CSV_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform cell-centred grid on ``[0, T] x box``.

    Args:
        T (float): horizon.
        nt (int): number of time slices; the grid holds ``nt + 1`` times including 0.
        box (Sequence[Tuple[float, float]]): per-coordinate interval.
        n (Sequence[int]): per-coordinate number of cells; nodes sit at the cell centres.
        band (int): number of boundary cells excluded from norm evaluation.
    """

    T: float
    nt: int
    box: Tuple[Tuple[float, float], ...]
    n: Tuple[int, ...]
    band: int = 2

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        n = tuple(int(m) for m in self.n)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "n", n)
        if len(box) != len(n) or not n:
            raise DimensionError(f"Box has {len(box)} intervals but {len(n)} point counts")
        if self.T <= 0 or self.nt < 2:
            raise ValueError("Grids need T > 0 and at least two time slices")
        if any(m < 4 for m in n) or any(hi <= lo for lo, hi in box):
            raise ValueError("Every axis needs at least 4 cells and a non-empty interval")
        if self.band < 0 or any(2 * self.band >= m for m in n):
            raise ValueError(f"Band of {self.band} cells leaves no inner box")

    @property
    def dim(self) -> int:
        """Space dimension."""
        return len(self.n)

    @property
    def shape(self) -> Tuple[int, ...]:
        """Shape of a field's value array."""
        return (self.nt + 1,) + self.n

    @property
    def times(self) -> np.ndarray:
        """The ``nt + 1`` output times."""
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def spacing(self) -> np.ndarray:
        """Cell widths ``h_j``."""
        return np.array([(hi - lo) / m for (lo, hi), m in zip(self.box, self.n)])

    @property
    def cell_volume(self) -> float:
        """Volume of one cell."""
        return float(np.prod(self.spacing))

    def axes(self) -> List[np.ndarray]:
        """Node coordinates per axis."""
        return [
            lo + (np.arange(m) + 0.5) * h for (lo, _), m, h in zip(self.box, self.n, self.spacing)
        ]

    def points(self) -> np.ndarray:
        """All nodes as an array of shape ``n + (N,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @property
    def inner(self) -> Tuple[slice, ...]:
        """Spatial slices of the inner box."""
        return tuple(slice(self.band, m - self.band) for m in self.n)

    @property
    def inner_box(self) -> Tuple[Tuple[float, float], ...]:
        """The inner box, on which norms are evaluated."""
        return tuple(
            (lo + self.band * h, hi - self.band * h) for (lo, hi), h in zip(self.box, self.spacing)
        )

    def covers_ball(self, radius: float) -> bool:
        """Whether the box contains the centred ball of the given radius."""
        if not np.isfinite(radius):
            return False
        return all(lo <= -radius and hi >= radius for lo, hi in self.box)

    def fractional_index(self, points) -> np.ndarray:
        """Continuous node index of points, shape ``(N, ...)`` as used by ``map_coordinates``."""
        points = np.asarray(points, dtype=float)
        lo = np.array([b[0] for b in self.box])
        idx = (points - lo - 0.5 * self.spacing) / self.spacing
        return np.moveaxis(idx, -1, 0)

    def refined(self, factor: int = 2) -> "SpaceTimeGrid":
        """Same box and horizon with ``factor`` times more cells and slices."""
        n = tuple(m * factor for m in self.n)
        return SpaceTimeGrid(self.T, self.nt * factor, self.box, n, self.band * factor)

    def to_dict(self) -> Dict[str, Any]:
        """JSON descriptor."""
        return {
            "T": self.T,
            "nt": self.nt,
            "box": [list(b) for b in self.box],
            "n": list(self.n),
            "band": self.band,
        }

    @classmethod
    def from_dict(cls, desc: Dict[str, Any]) -> "SpaceTimeGrid":
        """Build a grid from its descriptor."""
        box = tuple(tuple(b) for b in desc["box"])
        return cls(desc["T"], desc["nt"], box, tuple(desc["n"]), desc.get("band", 2))

    @classmethod
    def centered(cls, T: float, nt: int, half_widths: Sequence[float], n: Sequence[int], band=2):
        """Grid on the box ``prod_j [-a_j, a_j]``."""
        return cls(T, nt, tuple((-a, a) for a in half_widths), tuple(n), band)


@dataclass
class Field:
    """A function sampled on a space-time grid.

    Fields:
        grid: the grid
        values: array of shape ``(nt + 1,) + n``
        provenance: JSON-friendly description of how the values were produced
        std_error: per-node Monte Carlo standard errors, if any
        source_sup: ``sup |f|`` of the source that produced the field, if any
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    provenance: Dict[str, Any] = field(default_factory=dict)
    std_error: Optional[np.ndarray] = None
    source_sup: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise DimensionError(
                f"Values of shape {self.values.shape}, grid expects {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Field values must be finite")

    def sup(self) -> float:
        """``max |values|``."""
        return float(np.max(np.abs(self.values)))

    def _combine(self, other: "Field", op: str) -> "Field":
        if other.grid != self.grid:
            raise DimensionError("Fields live on different grids")
        values = self.values + other.values if op == "add" else self.values - other.values
        return Field(self.grid, values, {"op": op})

    def __add__(self, other: "Field") -> "Field":
        return self._combine(other, "add")

    def __sub__(self, other: "Field") -> "Field":
        return self._combine(other, "sub")

    def __mul__(self, scalar: float) -> "Field":
        factor = float(scalar)
        return Field(self.grid, factor * self.values, {"op": "scale", "factor": factor})

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return -1.0 * self

    def to_frame(self) -> pd.DataFrame:
        """Long table with columns ``t, z1, ..., zN, value`` in row-major node order."""
        grids = np.meshgrid(self.grid.times, *self.grid.axes(), indexing="ij")
        columns = {"t": grids[0].ravel()}
        for j, g in enumerate(grids[1:]):
            columns[f"z{j + 1}"] = g.ravel()
        columns["value"] = self.values.ravel()
        return pd.DataFrame(columns)

    def write_csv(self, path) -> None:
        """Write the long table with 17 significant digits."""
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    @classmethod
    def read_csv(cls, path, grid: SpaceTimeGrid, provenance: Optional[Dict] = None) -> "Field":
        """Read a table written by :meth:`write_csv` back onto ``grid``."""
        frame = pd.read_csv(path, float_precision="round_trip")
        expected = ["t"] + [f"z{j + 1}" for j in range(grid.dim)] + ["value"]
        if list(frame.columns) != expected:
            raise DimensionError(f"Expected columns {expected}, found {list(frame.columns)}")
        if len(frame) != int(np.prod(grid.shape)):
            raise DimensionError(f"Table has {len(frame)} rows, grid has {np.prod(grid.shape)}")
        values = frame["value"].to_numpy().reshape(grid.shape)
        return cls(grid, values, provenance or {"file": str(path)})


def sample_source(f, grid: SpaceTimeGrid, times: Optional[Sequence[float]] = None) -> np.ndarray:
    """Values of a source on all nodes, one slice per time (default: the grid times)."""
    pts = grid.points()
    times = grid.times if times is None else times
    return np.stack([f.evaluate(t, pts) for t in times])


def source_field(f, grid: SpaceTimeGrid) -> Field:
    """The source itself as a field on the grid (right-continuous in time)."""
    return Field(grid, sample_source(f, grid), {"source": "sampled"})


def wavenumbers(grid: SpaceTimeGrid) -> List[np.ndarray]:
    """Angular wavenumbers in ``rfftn`` layout, broadcastable against the transformed array."""
    ks = []
    for j, (m, h) in enumerate(zip(grid.n, grid.spacing)):
        k = 2.0 * np.pi * (np.fft.rfftfreq(m, d=h) if j == grid.dim - 1 else np.fft.fftfreq(m, d=h))
        shape = [1] * grid.dim
        shape[j] = k.size
        ks.append(k.reshape(shape))
    return ks


def quadratic_symbol(ks: List[np.ndarray], M: np.ndarray) -> np.ndarray:
    """``k^T M k`` on the wavenumber mesh."""
    out = 0.0
    for a, ka in enumerate(ks):
        for b, kb in enumerate(ks):
            if M[a, b] != 0.0:
                out = out + M[a, b] * ka * kb
    return np.broadcast_to(out, np.broadcast_shapes(*[k.shape for k in ks])).copy()


def linear_symbol(ks: List[np.ndarray], v) -> np.ndarray:
    """``k . v`` on the wavenumber mesh."""
    out = 0.0
    for ka, va in zip(ks, np.asarray(v, dtype=float)):
        out = out + va * ka
    return np.broadcast_to(out, np.broadcast_shapes(*[k.shape for k in ks])).copy()


def _inner_view(values: np.ndarray, grid: SpaceTimeGrid, offsets: Dict[int, int]) -> np.ndarray:
    lead = values.ndim - grid.dim
    index = [slice(None)] * lead
    for a, m in enumerate(grid.n):
        o = offsets.get(a, 0)
        index.append(slice(grid.band + o, m - grid.band + o))
    return values[tuple(index)]


def _require_band(grid: SpaceTimeGrid) -> None:
    if grid.band < 1:
        raise ValueError("Finite differences need a boundary band of at least one cell")


def gradient_entry(values: np.ndarray, grid: SpaceTimeGrid, a: int) -> np.ndarray:
    """Centred first difference along axis ``a``, on the inner box.

    ``values`` carries the spatial axes last; any leading axes (time) are kept.
    """
    _require_band(grid)
    h = grid.spacing[a]
    return (_inner_view(values, grid, {a: 1}) - _inner_view(values, grid, {a: -1})) / (2.0 * h)


def hessian_entry(values: np.ndarray, grid: SpaceTimeGrid, a: int, b: int) -> np.ndarray:
    """Centred second difference ``d_a d_b`` on the inner box; exact on quadratics."""
    _require_band(grid)
    h = grid.spacing
    if a == b:
        plus, minus = _inner_view(values, grid, {a: 1}), _inner_view(values, grid, {a: -1})
        return (plus - 2.0 * _inner_view(values, grid, {}) + minus) / h[a] ** 2
    pp = _inner_view(values, grid, {a: 1, b: 1})
    pm = _inner_view(values, grid, {a: 1, b: -1})
    mp = _inner_view(values, grid, {a: -1, b: 1})
    mm = _inner_view(values, grid, {a: -1, b: -1})
    return (pp - pm - mp + mm) / (4.0 * h[a] * h[b])


def inner_values(values: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Restriction of an array (spatial axes last) to the inner box."""
    return _inner_view(values, grid, {})
