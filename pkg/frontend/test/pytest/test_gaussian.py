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
"""Unit tests for the Gaussian laws and solvers of driftless and OU problems."""

import numpy as np
import pytest

from hypou.gaussian import (
    GaussianIncrementLaw,
    covariance_integral,
    density_envelope_constant,
    driftless_grid,
    increment_covariance,
    ou_covariance,
    ou_density,
    ou_density_hessian_x,
    pull_to_driftless,
    push_to_ou,
    residual,
    solve_driftless,
    solve_ou,
    time_schedule,
)
from hypou.grid import Field, SpaceTimeGrid
from hypou.options import SolverConfig
from hypou.paths import ConstantPath, SampledPath, SumPath, VanishingRankOnePath
from hypou.sources import BumpSource, CallableSource, TimeProfile, UniformSource
from hypou.utils.exceptions import CoverageError, MonteCarloBudgetError, SingularCovariance

CFG = SolverConfig()
QUADRATURE = SolverConfig(method="quadrature")


def poly_grid():
    """Small grid for polynomial sources (no coverage check applies)."""
    return SpaceTimeGrid.centered(1.0, 4, [2.0, 2.0], [8, 8])


class TestCovariance:
    """Covariance integrals and increment laws."""

    def test_kolmogorov_closed_form(self, kolmogorov):
        """``Sigma(0, 1) = 2 [[1, 1/2], [1/2, 1/3]]`` for the Kolmogorov pair."""
        cov = ou_covariance(kolmogorov, 0.0, 1.0).covariance
        expected = 2.0 * np.array([[1.0, 0.5], [0.5, 1.0 / 3.0]])
        assert np.linalg.norm(cov - expected) / np.linalg.norm(expected) < 1e-8

    def test_stationary(self, kolmogorov):
        """Without perturbation the law only depends on ``t - s``."""
        a = ou_covariance(kolmogorov, 0.3, 0.8).covariance
        b = ou_covariance(kolmogorov, 0.0, 0.5).covariance
        np.testing.assert_allclose(a, b, rtol=1e-10)

    def test_flow_identity(self, kolmogorov):
        """``Sigma(s, u) = Sigma(s, t) + e^{(t-s)A} Sigma(t, u) e^{(t-s)A*}``."""
        rng = np.random.default_rng(7)
        Q = SumPath([ConstantPath(kolmogorov.B), VanishingRankOnePath([0.6, 0.8], 0.5)])
        A = kolmogorov.A
        for _ in range(20):
            s, t, u = np.sort(rng.uniform(0.0, 1.0, size=3))
            E = np.array([[1.0, 0.0], [t - s, 1.0]])
            whole = covariance_integral(A, Q, s, u, CFG)
            split = covariance_integral(A, Q, s, t, CFG) + E @ covariance_integral(
                A, Q, t, u, CFG
            ) @ E.T
            np.testing.assert_allclose(whole, split, atol=1e-8 * max(1.0, np.abs(whole).max()))

    def test_perturbed_law(self, kolmogorov):
        """A constant perturbation adds its own Lyapunov integral."""
        S = ConstantPath(np.diag([0.0, 1.0]))
        cov = ou_covariance(kolmogorov, 0.0, 1.0, perturbation=S).covariance
        expected = 2.0 * np.array([[1.0, 0.5], [0.5, 1.0 / 3.0]]) + np.diag([0.0, 2.0])
        np.testing.assert_allclose(cov, expected, rtol=1e-8)

    def test_constant_shortcut(self):
        """Constant paths without drift integrate exactly."""
        M = np.array([[2.0, 1.0], [1.0, 1.0]])
        np.testing.assert_array_equal(
            covariance_integral(0.0, ConstantPath(M), 0.2, 0.7, CFG), 2.0 * 0.5 * M
        )

    def test_linear_path(self):
        """``2 int_s^t r M dr = (t^2 - s^2) M``."""
        M = np.array([[1.0, 0.5], [0.5, 2.0]])
        Q = SampledPath([0.0, 1.0], [np.zeros((2, 2)), M])
        law = increment_covariance(Q, 0.25, 0.75)
        np.testing.assert_allclose(law.covariance, (0.75**2 - 0.25**2) * M, rtol=1e-9)

    def test_degenerate_interval(self):
        """Empty intervals give zero covariance; reversed ones raise."""
        np.testing.assert_array_equal(
            covariance_integral(0.0, ConstantPath(np.eye(2)), 0.4, 0.4, CFG), np.zeros((2, 2))
        )
        with pytest.raises(ValueError, match="Expected 0 <= s <= t"):
            covariance_integral(0.0, ConstantPath(np.eye(2)), 0.5, 0.4, CFG)

    def test_increment_law(self):
        """Degenerate covariances keep their rank; samples follow the factor."""
        law = GaussianIncrementLaw.from_covariance([[1.0, 1.0], [1.0, 1.0]])
        assert law.rank == 1
        np.testing.assert_allclose(law.factor @ law.factor.T, [[1.0, 1.0], [1.0, 1.0]])
        draws = law.sample(np.ones((5, 1)))
        assert draws.shape == (5, 2)
        np.testing.assert_allclose(draws[:, 0], draws[:, 1])


class TestDensity:
    """OU transition densities."""

    def test_normalized(self, kolmogorov):
        """The density integrates to one in the end point."""
        x = np.linspace(-6.0, 6.0, 481)
        y = np.linspace(-4.0, 4.0, 641)
        zp = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)
        p = ou_density(kolmogorov, 0.5, [0.3, -0.2], zp)
        total = p.sum() * (x[1] - x[0]) * (y[1] - y[0])
        assert total == pytest.approx(1.0, rel=1e-6)

    def test_chapman_kolmogorov(self, kolmogorov):
        """``int p(s, z, w) p(t, w, z') dw = p(s + t, z, z')`` at ``s = t = 1/4``."""
        z, zp = np.array([0.0, 0.0]), np.array([0.2, 0.05])
        x = np.linspace(-4.0, 4.0, 801)
        y = np.linspace(-1.0, 1.0, 801)
        w = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1)
        inner = ou_density(kolmogorov, 0.25, z, w) * ou_density(kolmogorov, 0.25, w, zp)
        composed = inner.sum() * (x[1] - x[0]) * (y[1] - y[0])
        direct = ou_density(kolmogorov, 0.5, z, zp)
        assert abs(composed - direct) < 1e-3 * direct

    def test_hessian_finite_differences(self, kolmogorov):
        """The jax Hessian in ``x`` matches centred second differences."""
        z = np.array([[0.1, -0.3], [0.5, 0.2]])
        zp = np.array([[0.0, 0.0], [0.4, 0.6]])
        hess = ou_density_hessian_x(kolmogorov, 0.4, z, zp)
        assert hess.shape == (2, 1, 1)
        h = 1e-3
        e = np.array([h, 0.0])
        fd = (
            ou_density(kolmogorov, 0.4, z + e, zp)
            - 2.0 * ou_density(kolmogorov, 0.4, z, zp)
            + ou_density(kolmogorov, 0.4, z - e, zp)
        ) / h**2
        np.testing.assert_allclose(hess[:, 0, 0], fd, rtol=1e-4)

    def test_singular(self, kolmogorov):
        """Tiny times give numerically singular covariances; non-positive times raise."""
        with pytest.raises(SingularCovariance, match="condition number"):
            ou_density(kolmogorov, 1e-7, [0.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError, match="must be positive"):
            ou_density(kolmogorov, 0.0, [0.0, 0.0], [0.0, 0.0])

    def test_envelope_constant(self, kolmogorov):
        """A finite envelope constant fits a small lattice."""
        pts = np.array([[0.0, 0.0], [0.5, -0.5], [-1.0, 1.0]])
        C = density_envelope_constant(kolmogorov, [0.1, 0.5, 1.0], pts, pts)
        assert 1.0 <= C < 1e8


class TestSchedule:
    """Internal time nodes."""

    def test_breakpoint_insertion(self):
        """Breakpoints become nodes with distinct left and right evaluation times."""
        grid = SpaceTimeGrid.centered(1.0, 4, [1.0], [8])
        schedule = time_schedule(grid, [0.3], 2)
        assert len(schedule.nodes) == 10
        j = int(np.argmin(np.abs(schedule.nodes - 0.3)))
        assert schedule.breaks[j]
        assert schedule.right_times[j] == 0.3
        assert schedule.left_times[j] < 0.3
        np.testing.assert_allclose(schedule.nodes[schedule.outputs], grid.times)

    def test_breakpoint_on_node(self):
        """A breakpoint on an existing node does not add a node."""
        grid = SpaceTimeGrid.centered(1.0, 4, [1.0], [8])
        schedule = time_schedule(grid, [0.5, 1.5], 1)
        assert len(schedule.nodes) == 5
        assert np.count_nonzero(schedule.breaks) == 1


class TestDirectSolvers:
    """Quadrature and Monte Carlo solves against closed forms."""

    def test_heat_quadratic(self, heat2):
        """``f = x^2``: ``u = t x^2 + t^2`` exactly."""
        grid = poly_grid()
        f = CallableSource(lambda t, z: z[..., 0] ** 2, 2)
        u = solve_ou(heat2, f, grid, QUADRATURE)
        t = grid.times[:, None, None]
        x = grid.points()[None, ..., 0]
        np.testing.assert_allclose(u.values, t * x**2 + t**2, rtol=1e-8, atol=1e-12)
        assert u.provenance["method"] == "quadrature"
        assert u.provenance["seed"] is None

    def test_kolmogorov_linear(self, kolmogorov):
        """``f = y``: ``u = t y + t^2 x / 2``, the drift transports the source."""
        grid = poly_grid()
        f = CallableSource(lambda t, z: z[..., 1], 2)
        u = solve_ou(kolmogorov, f, grid, QUADRATURE)
        t = grid.times[:, None, None]
        pts = grid.points()[None]
        expected = t * pts[..., 1] + 0.5 * t**2 * pts[..., 0]
        np.testing.assert_allclose(u.values, expected, rtol=1e-8, atol=1e-12)

    def test_montecarlo_linear_exact(self, kolmogorov):
        """Antithetic pairs average linear sources exactly."""
        grid = poly_grid()
        f = CallableSource(lambda t, z: z[..., 1], 2)
        u = solve_ou(kolmogorov, f, grid, SolverConfig(method="montecarlo", n_paths=10))
        t = grid.times[:, None, None]
        pts = grid.points()[None]
        np.testing.assert_allclose(u.values, t * pts[..., 1] + 0.5 * t**2 * pts[..., 0], atol=1e-10)
        assert u.provenance["seed"] == 0

    def test_montecarlo_quadratic(self, kolmogorov, tol_stochastic):
        """Monte Carlo agrees with the closed form within its standard errors."""
        grid = poly_grid()
        f = CallableSource(lambda t, z: z[..., 0] ** 2, 2)
        u = solve_ou(kolmogorov, f, grid, SolverConfig(method="montecarlo", n_paths=4000), seed=3)
        t = grid.times[:, None, None]
        exact = t * grid.points()[None, ..., 0] ** 2 + t**2
        assert np.all(np.abs(u.values - exact) <= tol_stochastic * u.std_error + 1e-12)
        assert np.all(u.std_error[1:] > 0)

    def test_montecarlo_seeds(self, kolmogorov):
        """Equal seeds reproduce a Monte Carlo solve; other seeds do not."""
        grid = poly_grid()
        f = CallableSource(lambda t, z: np.cos(z[..., 0]), 2)
        cfg = SolverConfig(method="montecarlo", n_paths=64)
        a = solve_ou(kolmogorov, f, grid, cfg, seed=5)
        b = solve_ou(kolmogorov, f, grid, cfg, seed=5)
        c = solve_ou(kolmogorov, f, grid, cfg, seed=6)
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_budget(self, kolmogorov):
        """Requests above the path budget are rejected."""
        f = CallableSource(lambda t, z: z[..., 0], 2)
        cfg = SolverConfig(method="montecarlo", n_paths=11, max_paths=10)
        with pytest.raises(MonteCarloBudgetError, match="12 paths requested"):
            solve_ou(kolmogorov, f, poly_grid(), cfg)

    def test_coverage(self, kolmogorov):
        """Boxes smaller than the coverage ball are rejected."""
        grid = SpaceTimeGrid.centered(1.0, 4, [2.0, 2.0], [8, 8])
        with pytest.raises(CoverageError, match="does not contain the ball"):
            solve_ou(kolmogorov, BumpSource([0.0, 0.0], 1.0), grid, QUADRATURE)
        with pytest.raises(CoverageError):
            solve_driftless(ConstantPath(np.eye(2)), BumpSource([0.0, 0.0], 1.0), grid)


class TestSpectral:
    """The Fourier engine and the drift-removal pipeline."""

    def test_uniform_source(self, spectral):
        """A spatially constant source integrates exactly in time."""
        grid = SpaceTimeGrid.centered(1.0, 4, [4.0, 4.0], [16, 16])
        v = solve_driftless(ConstantPath(np.eye(2)), UniformSource(2), grid, spectral)
        expected = np.broadcast_to(grid.times[:, None, None], grid.shape)
        np.testing.assert_allclose(v.values, expected, rtol=1e-12, atol=1e-14)

    def test_step_profile(self, spectral):
        """Time discontinuities are integrated with one-sided limits."""
        grid = SpaceTimeGrid.centered(1.0, 4, [4.0, 4.0], [16, 16])
        f = UniformSource(2, TimeProfile("step", before=1.0, after=3.0, breakpoint=0.3))
        v = solve_driftless(ConstantPath(np.eye(2)), f, grid, spectral)
        expected = np.where(grid.times < 0.3, grid.times, 0.3 + 3.0 * (grid.times - 0.3))
        np.testing.assert_allclose(v.values[:, 0, 0], expected, rtol=1e-12, atol=1e-14)

    def test_matches_quadrature(self, kolmogorov, spectral):
        """Drift removal with the spectral engine agrees with Gauss-Hermite quadrature."""
        grid = SpaceTimeGrid.centered(0.5, 4, [6.0, 6.0], [48, 48])
        f = BumpSource([0.0, 0.0], 1.0)
        u_spec = solve_ou(kolmogorov, f, grid, spectral)
        u_quad = solve_ou(kolmogorov, f, grid, QUADRATURE)
        assert (u_spec - u_quad).sup() < 2e-2 * u_quad.sup()

    def test_max_principle(self, kolmogorov, spectral, small_grid):
        """``sup |u| <= T sup |f|``."""
        f = BumpSource([0.5, 0.0], 1.0, 2.0)
        u = solve_ou(kolmogorov, f, small_grid, spectral)
        assert u.sup() <= small_grid.T * u.source_sup + 1e-8
        assert u.source_sup == pytest.approx(2.0)

    def test_residual_exact_on_quadratics(self):
        """``v = t x^2`` with ``f = x^2 - 2t`` has no discretization error."""
        grid = poly_grid()
        Q = ConstantPath(np.eye(2))
        f = CallableSource(lambda t, z: z[..., 0] ** 2 - 2.0 * t, 2)
        values = grid.times[:, None, None] * grid.points()[None, ..., 0] ** 2
        assert residual(Field(grid, values), Q, f) <= 1e-8
        zero = CallableSource(lambda t, z: 0.0 * z[..., 0], 2)
        assert residual(Field(grid, np.zeros(grid.shape)), Q, zero) == 0.0

    def test_residual_order(self, spectral):
        """The integral-form residual drops by four when ``h`` and ``dt`` are halved."""
        Q = ConstantPath(np.eye(2))
        f = CallableSource(lambda t, z: np.exp(-0.5 * np.sum(z**2, axis=-1)), 2, sup=1.0)
        coarse = SpaceTimeGrid.centered(0.25, 8, [10.0, 10.0], [40, 40])
        fine = coarse.refined(2)
        r_coarse = residual(solve_driftless(Q, f, coarse, spectral), Q, f)
        r_fine = residual(solve_driftless(Q, f, fine, spectral), Q, f)
        assert r_coarse / r_fine == pytest.approx(4.0, rel=0.25)

    def test_driftless_grid(self, kolmogorov, small_grid):
        """The drift-free box keeps the spacing and contains the transported nodes."""
        Q = ConstantPath(kolmogorov.B)
        dgrid = driftless_grid(kolmogorov.A, small_grid, Q, BumpSource([0.0, 0.0], 1.0))
        np.testing.assert_allclose(dgrid.spacing, small_grid.spacing)
        assert all(m % 2 == 0 for m in dgrid.n)
        (xlo, xhi), (ylo, yhi) = dgrid.box
        assert xlo <= -8.0 and xhi >= 8.0
        assert ylo <= -8.0 - 0.5 * 8.0 and yhi >= 8.0 + 0.5 * 8.0

    def test_remap(self, small_grid):
        """Zero drift on the same grid copies; leaving the sampled region raises."""
        u = Field(small_grid, np.ones(small_grid.shape))
        v = pull_to_driftless(u, np.zeros((2, 2)))
        np.testing.assert_array_equal(v.values, u.values)
        assert v.provenance["map"] == "pull"
        wider = SpaceTimeGrid.centered(0.5, 8, [12.0, 12.0], [48, 48])
        with pytest.raises(CoverageError, match="push"):
            push_to_ou(u, np.zeros((2, 2)), wider)

    def test_remap_round_trip(self, kolmogorov):
        """Pulling and pushing back ``exp(-|z|^2)`` is exact up to cubic interpolation."""
        outer = SpaceTimeGrid.centered(0.5, 4, [6.0, 6.0], [96, 96])
        middle = SpaceTimeGrid.centered(0.5, 4, [3.0, 3.0], [48, 48])
        inner = SpaceTimeGrid.centered(0.5, 4, [1.5, 1.5], [24, 24])

        def gaussian(grid):
            profile = np.exp(-np.sum(grid.points() ** 2, axis=-1))
            return np.broadcast_to(profile, grid.shape).copy()

        u = Field(outer, gaussian(outer))
        v = pull_to_driftless(u, kolmogorov.A, middle)
        x, y = middle.points()[..., 0], middle.points()[..., 1]
        t = middle.times[:, None, None]
        np.testing.assert_allclose(v.values, np.exp(-(x**2) - (y - t * x) ** 2), atol=1e-3)
        back = push_to_ou(v, kolmogorov.A, inner)
        assert back.provenance["map"] == "push"
        assert np.max(np.abs(back.values - gaussian(inner))) <= 1e-3


class TestSolverProperties:
    """Linearity and positivity of the solution operators."""

    GRID = SpaceTimeGrid.centered(0.5, 4, [8.0, 8.0], [32, 32])

    @pytest.mark.parametrize("method", ["spectral", "quadrature"])
    def test_linearity(self, kolmogorov, method):
        """``solve(f + 2g) = solve(f) + 2 solve(g)``."""
        cfg = SolverConfig(method=method)
        f = BumpSource([0.5, 0.0], 1.0)
        g = BumpSource([-0.5, 0.5], 1.5, 1.0, TimeProfile("linear", a=0.5, b=1.0))
        combined = solve_ou(kolmogorov, f + g * 2.0, self.GRID, cfg)
        separate = solve_ou(kolmogorov, f, self.GRID, cfg) + 2.0 * solve_ou(
            kolmogorov, g, self.GRID, cfg
        )
        np.testing.assert_allclose(combined.values, separate.values, atol=1e-12)

    @pytest.mark.parametrize(
        "cfg", [SolverConfig(method="quadrature"), SolverConfig(method="montecarlo", n_paths=64)]
    )
    def test_positivity(self, kolmogorov, cfg):
        """Non-negative sources give non-negative solutions."""
        f = BumpSource([0.5, -0.5], 1.0, 1.0, TimeProfile("sine", a=1.0, b=0.5, period=0.5))
        u = solve_ou(kolmogorov, f, self.GRID, cfg, seed=1)
        assert np.min(u.values) >= 0.0
        assert u.sup() > 0.0


if __name__ == "__main__":
    pytest.main(["-x", __file__])
