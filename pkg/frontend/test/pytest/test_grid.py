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
"""Unit tests for grids, fields and solver options."""

import io
from copy import deepcopy

import numpy as np
import pytest

from hypou.grid import (
    Field,
    SpaceTimeGrid,
    gradient_entry,
    hessian_entry,
    inner_values,
    linear_symbol,
    quadratic_symbol,
    source_field,
    wavenumbers,
)
from hypou.options import SolverConfig, derived_int_seed, log_verbose, path_seed
from hypou.sources import BumpSource
from hypou.utils.exceptions import DimensionError


class TestSpaceTimeGrid:
    """Cell-centred tensor grids."""

    def test_geometry(self):
        """Nodes sit at cell centres; the inner box drops the band."""
        grid = SpaceTimeGrid.centered(1.0, 4, [2.0, 1.0], [8, 4], band=1)
        assert grid.shape == (5, 8, 4)
        np.testing.assert_allclose(grid.spacing, [0.5, 0.5])
        np.testing.assert_allclose(grid.axes()[1], [-0.75, -0.25, 0.25, 0.75])
        np.testing.assert_allclose(grid.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert grid.inner_box == ((-1.5, 1.5), (-0.5, 0.5))
        assert grid.points().shape == (8, 4, 2)
        assert grid.cell_volume == pytest.approx(0.25)

    @pytest.mark.parametrize(
        "args, error",
        [
            ((1.0, 1, ((-1.0, 1.0),), (8,), 2), ValueError),
            ((0.0, 4, ((-1.0, 1.0),), (8,), 2), ValueError),
            ((1.0, 4, ((-1.0, 1.0),), (3,), 1), ValueError),
            ((1.0, 4, ((1.0, -1.0),), (8,), 2), ValueError),
            ((1.0, 4, ((-1.0, 1.0),), (8,), 4), ValueError),
            ((1.0, 4, ((-1.0, 1.0),), (8, 8), 2), DimensionError),
        ],
    )
    def test_validation(self, args, error):
        """Degenerate horizons, boxes, counts and bands are rejected."""
        with pytest.raises(error):
            SpaceTimeGrid(*args)

    def test_covers_ball(self):
        """Balls are covered when every axis contains their shadow."""
        grid = SpaceTimeGrid(1.0, 2, ((-3.0, 3.0), (-2.0, 4.0)), (8, 8))
        assert grid.covers_ball(2.0)
        assert not grid.covers_ball(2.5)
        assert not grid.covers_ball(np.inf)

    def test_refined(self):
        """Refinement doubles cells, slices and the band."""
        grid = SpaceTimeGrid.centered(1.0, 4, [1.0], [8]).refined(2)
        assert (grid.n, grid.nt, grid.band) == ((16,), 8, 4)
        assert SpaceTimeGrid.from_dict(grid.to_dict()) == grid

    def test_fractional_index(self):
        """Nodes have integer fractional indices."""
        grid = SpaceTimeGrid.centered(1.0, 2, [2.0, 2.0], [8, 8])
        idx = grid.fractional_index(grid.points())
        np.testing.assert_allclose(idx[0][:, 0], np.arange(8), atol=1e-12)


class TestField:
    """Sampled fields."""

    GRID = SpaceTimeGrid.centered(1.0, 2, [2.0, 2.0], [8, 8])

    def test_arithmetic(self):
        """Fields on the same grid combine; different grids do not."""
        u = Field(self.GRID, np.ones(self.GRID.shape))
        assert (u + u).sup() == 2.0
        assert (u - 3.0 * u).sup() == 2.0
        assert (-u).values.min() == -1.0
        other = Field(SpaceTimeGrid.centered(1.0, 2, [2.0, 2.0], [16, 16]), np.zeros((3, 16, 16)))
        with pytest.raises(DimensionError, match="different grids"):
            u + other  # pylint: disable=pointless-statement

    def test_validation(self):
        """Shapes must match and values must be finite."""
        with pytest.raises(DimensionError, match="grid expects"):
            Field(self.GRID, np.ones((2, 8, 8)))
        values = np.ones(self.GRID.shape)
        values[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="finite"):
            Field(self.GRID, values)

    def test_csv(self, tmp_path):
        """Tables keep 17 significant digits and their column layout."""
        values = np.random.default_rng(0).standard_normal(self.GRID.shape)
        path = tmp_path / "u.csv"
        Field(self.GRID, values).write_csv(path)
        back = Field.read_csv(path, self.GRID)
        np.testing.assert_array_equal(back.values, values)
        with pytest.raises(DimensionError, match="rows"):
            Field.read_csv(path, SpaceTimeGrid.centered(1.0, 2, [2.0, 2.0], [4, 8]))

    def test_source_field(self):
        """Sources sample onto every node and time."""
        u = source_field(BumpSource([0.0, 0.0], 1.0), self.GRID)
        assert u.values.shape == self.GRID.shape
        assert 0.0 < u.sup() <= 1.0


class TestDifferences:
    """Centred differences and Fourier symbols."""

    GRID = SpaceTimeGrid.centered(1.0, 2, [2.0, 2.0], [16, 16], band=2)

    def test_quadratic(self):
        """Second differences are exact on quadratics."""
        pts = self.GRID.points()
        u = pts[..., 0] ** 2 + 3.0 * pts[..., 0] * pts[..., 1]
        np.testing.assert_allclose(hessian_entry(u, self.GRID, 0, 0), 2.0)
        np.testing.assert_allclose(hessian_entry(u, self.GRID, 0, 1), 3.0)
        np.testing.assert_allclose(
            gradient_entry(u, self.GRID, 1), 3.0 * inner_values(pts[..., 0], self.GRID)
        )

    def test_band_required(self):
        """Finite differences need a band."""
        grid = SpaceTimeGrid.centered(1.0, 2, [1.0], [8], band=0)
        with pytest.raises(ValueError, match="band"):
            hessian_entry(np.zeros(8), grid, 0, 0)

    def test_symbols(self):
        """Symbols act on plane waves as multiplication."""
        ks = wavenumbers(self.GRID)
        assert ks[0].shape == (16, 1) and ks[1].shape == (1, 9)
        M = np.array([[1.0, 0.5], [0.5, 2.0]])
        q = quadratic_symbol(ks, M)
        assert q.shape == (16, 9)
        k0, k1 = ks[0][3, 0], ks[1][0, 2]
        assert q[3, 2] == pytest.approx(k0**2 + k0 * k1 + 2.0 * k1**2)
        assert linear_symbol(ks, [1.0, -1.0])[3, 2] == pytest.approx(k0 - k1)


class TestSolverConfig:
    """Solver options and helpers."""

    @pytest.mark.parametrize(
        "kwargs",
        [{"method": "fem"}, {"n_paths": 1}, {"substeps": 0}, {"workers": 0}, {"split_dt": 0.0}],
    )
    def test_validation(self, kwargs):
        """Unknown methods and non-positive counts are rejected."""
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_method(self):
        """``auto`` picks quadrature up to three dimensions."""
        assert SolverConfig().resolved_method(3) == "quadrature"
        assert SolverConfig().resolved_method(4) == "montecarlo"
        assert SolverConfig(method="spectral").resolved_method(4) == "spectral"
        assert SolverConfig(n_paths=11).even_paths == 12

    def test_verbose(self):
        """Tagged lines go to the logfile only in verbose mode."""
        log = io.StringIO()
        log_verbose(SolverConfig(verbose=True, logfile=log), "SOLVE", "slice 1/4")
        log_verbose(SolverConfig(logfile=log), "SOLVE", "hidden")
        log_verbose(None, "SOLVE", "hidden")
        assert log.getvalue() == "[SOLVE] slice 1/4\n"

    def test_deepcopy(self):
        """Copies share the logfile."""
        log = io.StringIO()
        cfg = SolverConfig(logfile=log, substeps=3)
        copy = deepcopy(cfg)
        assert copy.logfile is log
        assert copy.substeps == 3

    def test_seeds(self):
        """Derived seeds depend only on the master seed and the index."""
        assert derived_int_seed(4, 2) == derived_int_seed(4, 2)
        assert derived_int_seed(4, 2) != derived_int_seed(4, 3)
        a = np.random.default_rng(path_seed(1, 0)).standard_normal(3)
        b = np.random.default_rng(path_seed(1, 0)).standard_normal(3)
        np.testing.assert_array_equal(a, b)


if __name__ == "__main__":
    pytest.main(["-x", __file__])
