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
"""Unit tests for the stability harness."""

import json

import numpy as np
import pytest

from hypou.gaussian import coverage_radius, covariance_integral, solve_ou
from hypou.grid import Field, SpaceTimeGrid
from hypou.harness import (
    NormPair,
    covering_grid,
    default_perturbation_suite,
    default_source_suite,
    epsilon_convergence_study,
    estimate_constant,
    harness_config,
    kolmogorov_system,
    ladder_solve,
    max_principle_row,
    max_principle_suite,
    norm_pair,
    refinement_study,
    schauder_stability,
    sobolev_stability,
    solve_perturbed,
    stability_experiment,
)
from hypou.paths import ConstantPath, SumPath
from hypou.sources import BumpSource
from hypou.structure import OUSystem
from hypou.utils.exceptions import ClassError, ExponentError

SMALL = SpaceTimeGrid.centered(0.25, 4, [8.0, 8.0], [32, 32])


@pytest.fixture(scope="module")
def suites():
    """Two sources and two perturbations of the default suites."""
    sources = default_source_suite(count=2)
    S_all = default_perturbation_suite()
    return sources, {name: S_all[name] for name in ("zero", "isotropic")}


@pytest.fixture(scope="module")
def suite_grid(suites):
    """Coarse grid covering the small suites on ``[0, 1/2]``."""
    sources, perturbations = suites
    return covering_grid(
        kolmogorov_system(), list(sources.values()), list(perturbations.values()), 0.5, 8, 32
    )


@pytest.fixture(scope="module")
def default_grid():
    """Grid covering the full default suites on the unit horizon."""
    return covering_grid(
        kolmogorov_system(),
        list(default_source_suite().values()),
        list(default_perturbation_suite().values()),
        1.0,
        16,
        48,
    )


class TestSuites:
    """Default sources, perturbations and grids."""

    def test_sources(self):
        """Ten bumps with radii in [1, 2]; the last one switches off at t = 1/2."""
        suite = default_source_suite()
        assert list(suite) == [f"bump{j}" for j in range(10)]
        radii = [f.radius for f in suite.values()]
        assert radii[0] == 1.0 and radii[-1] == 2.0
        assert suite["bump9"].time_breakpoints == (0.5,)
        assert all(f.sup_bound(1.0) <= 1.5 for f in suite.values())

    def test_perturbations(self):
        """Every perturbation is PSD; the degenerate ones vanish where promised."""
        suite = default_perturbation_suite()
        assert suite["zero"].is_zero()
        for S in suite.values():
            for t in np.linspace(0.0, 1.0, 21):
                assert np.min(np.linalg.eigvalsh(S.evaluate(t))) >= -1e-12
        np.testing.assert_array_equal(suite["rank1-vanishing"].evaluate(0.75), np.zeros((2, 2)))
        np.testing.assert_array_equal(
            suite["degenerate-subinterval"].evaluate(0.2), np.zeros((2, 2))
        )
        assert suite["degenerate-subinterval"].evaluate(0.5)[1, 1] == pytest.approx(0.5)

    def test_covering_grid(self, suites, suite_grid):
        """The cube contains the coverage ball of every (source, perturbation) pair."""
        system = kolmogorov_system()
        sources, perturbations = suites
        assert suite_grid.n == (32, 32)
        assert suite_grid.nt == 8
        for S in perturbations.values():
            cov = covariance_integral(
                system.A, SumPath([ConstantPath(system.B), S]), 0.0, 0.5, harness_config()
            )
            for f in sources.values():
                assert suite_grid.covers_ball(coverage_radius(f, cov))


class TestNormPairs:
    """Pairs of output and input norms."""

    def test_ratio_conventions(self):
        """Zero over zero is zero; a positive output over a zero input is infinite."""
        grid = SpaceTimeGrid.centered(1.0, 2, [1.0], [8])
        zero = Field(grid, np.zeros(grid.shape))
        pair = NormPair("t", "out", "in", lambda u: 1.0, lambda f: 0.0)
        assert pair.ratio(zero, zero) == np.inf
        pair = NormPair("t", "out", "in", lambda u: 0.0, lambda f: 0.0)
        assert pair.ratio(zero, zero) == 0.0
        assert pair.estimator == ["out", "in"]

    def test_names(self, kolmogorov):
        """Estimator names record the exponents."""
        assert norm_pair("d2x_lp", kolmogorov).estimator == ["d2x_lp(p=2)", "lp(p=2)"]
        assert norm_pair("sobolev_y", kolmogorov, p=3).estimator == [
            "sobolev_aniso.y1(p=3)",
            "lp(p=3)",
        ]
        assert norm_pair("schauder", kolmogorov, beta=0.25).estimator == [
            "holder_aniso(gamma=2.25)",
            "holder_aniso(gamma=0.25)",
        ]

    def test_errors(self, kolmogorov, heat2):
        """Unknown pairs, bad exponents and missing blocks are rejected."""
        with pytest.raises(ValueError, match="Unknown norm pair"):
            norm_pair("energy", kolmogorov)
        with pytest.raises(ExponentError, match="Schauder exponent"):
            norm_pair("schauder", kolmogorov, beta=1.0)
        with pytest.raises(ValueError, match="degenerate block"):
            norm_pair("sobolev_y", heat2)


class TestMaxPrinciple:
    """``sup |u| <= T sup |f|`` tables."""

    def test_row(self):
        """Rows compare against the recorded source sup."""
        grid = SpaceTimeGrid.centered(2.0, 2, [1.0], [8])
        field = Field(grid, np.full(grid.shape, 1.5), source_sup=1.0)
        row = max_principle_row("a", field)
        assert row.bound == 2.0 and row.passed
        assert not max_principle_row("a", field, T=1.0).passed
        with pytest.raises(ValueError, match="does not record"):
            max_principle_row("b", Field(grid, np.zeros(grid.shape)))

    def test_suite(self, kolmogorov, spectral):
        """Solved fields satisfy the maximum principle."""
        grid = SpaceTimeGrid.centered(0.5, 4, [8.0, 8.0], [32, 32])
        fields = {
            name: solve_ou(kolmogorov, f, grid, spectral)
            for name, f in default_source_suite(count=3).items()
        }
        rows = max_principle_suite(fields)
        assert [row.name for row in rows] == ["bump0", "bump1", "bump2"]
        assert all(row.passed for row in rows)


class TestStability:
    """The stability experiment on small suites."""

    def test_report(self, suites, suite_grid):
        """Ratios, base constant and margin are consistent."""
        sources, perturbations = suites
        system = kolmogorov_system()
        pair = norm_pair("d2x_lp", system)
        report = stability_experiment(system, perturbations, sources, pair, suite_grid, seed=3)
        ratios = np.array(report.ratios)
        assert ratios.shape == (2, 2)
        assert report.c_hat_base == pytest.approx(ratios[:, 0].max())
        assert report.margin == pytest.approx(ratios.max() / ratios[:, 0].max())
        assert report.margin >= 1.0
        assert report.passed == (report.margin <= 1.0 + report.delta)
        assert len(report.seeds) == 2
        assert [row.name for row in report.max_principle] == [
            "bump0/base",
            "bump0/isotropic",
            "bump1/base",
            "bump1/isotropic",
        ]
        assert all(row.passed for row in report.max_principle)
        assert "runtimes" not in json.loads(report.to_json())
        assert report.runtimes["total"] > 0.0
        assert estimate_constant(system, sources, pair, suite_grid, seed=3) == report.c_hat_base

    def test_worker_independent(self, suites, suite_grid):
        """The report does not depend on the number of workers."""
        sources, perturbations = suites
        system = kolmogorov_system()
        pair = norm_pair("d2x_lp", system)
        one = stability_experiment(system, perturbations, sources, pair, suite_grid)
        many = stability_experiment(
            system, perturbations, sources, pair, suite_grid, harness_config(workers=4)
        )
        assert one.to_json() == many.to_json()

    @pytest.mark.slow
    @pytest.mark.parametrize("estimate", ["d2x_lp", "sobolev_y", "schauder"])
    def test_default_suites(self, estimate, default_grid):
        """Ten sources and six perturbations keep every ratio within five percent of the base."""
        system = kolmogorov_system()
        sources, perturbations = default_source_suite(), default_perturbation_suite()
        if estimate == "sobolev_y":
            report = sobolev_stability(system, perturbations, sources, default_grid, component=True)
        elif estimate == "schauder":
            report = schauder_stability(system, 0.5, perturbations, sources, default_grid)
        else:
            pair = norm_pair(estimate, system)
            report = stability_experiment(system, perturbations, sources, pair, default_grid)
        assert np.array(report.ratios).shape == (10, 6)
        assert report.c_hat_base > 0.0
        assert report.margin <= 1.05
        assert report.passed
        ratios = np.array(report.ratios)
        for name in ("degenerate-subinterval", "rank1-vanishing"):
            column = ratios[:, report.perturbations.index(name)]
            assert np.all(column <= 1.05 * report.c_hat_base)
        assert all(row.passed for row in report.max_principle)

    def test_invalid(self, suites, suite_grid):
        """Empty suites, unknown modes and non-homogeneous drifts are rejected."""
        sources, perturbations = suites
        system = kolmogorov_system()
        pair = norm_pair("d2x_lp", system)
        with pytest.raises(ValueError, match="non-empty"):
            stability_experiment(system, {}, sources, pair, suite_grid)
        with pytest.raises(ValueError, match="Unknown mode"):
            stability_experiment(system, perturbations, sources, pair, suite_grid, mode="mc")
        damped = OUSystem([[1.0, 0.0], [1.0, 0.0]], [[1.0]])
        with pytest.raises(ClassError, match="vanishing upper blocks"):
            sobolev_stability(damped, perturbations, sources, suite_grid)


class TestPerturbedSolves:
    """Direct and ladder solves of perturbed problems."""

    def test_direct_mode(self, kolmogorov, spectral):
        """Direct mode without perturbation is the plain OU solve."""
        f = BumpSource([0.0, 0.0], 1.0)
        np.testing.assert_array_equal(
            solve_perturbed(kolmogorov, f, None, SMALL, spectral).values,
            solve_ou(kolmogorov, f, SMALL, spectral).values,
        )
        with pytest.raises(ValueError, match="Unknown mode"):
            solve_perturbed(kolmogorov, f, None, SMALL, spectral, mode="exact")

    def test_ladder_mode(self, heat2, spectral):
        """The ladder without perturbation agrees with the direct solve up to time stepping."""
        f = BumpSource([0.0, 0.0], 1.0)
        ladder = solve_perturbed(
            heat2, f, None, SMALL, spectral, mode="poisson-ladder", eps_ladder=(0.2, 0.1)
        )
        direct = solve_ou(heat2, f, SMALL, spectral)
        assert (ladder - direct).sup() < 5e-2 * direct.sup()
        assert ladder.source_sup == 1.0

    def test_ladder_with_drift(self, kolmogorov, spectral):
        """Ladder fields are pushed back onto the requested grid."""
        f = BumpSource([0.0, 0.0], 1.0)
        S = ConstantPath(0.5 * np.eye(2))
        u, rows = ladder_solve(kolmogorov, f, S, SMALL, (0.4, 0.2), spectral)
        assert u.grid == SMALL
        assert u.provenance["map"] == "push"
        assert [row.epsilon for row in rows] == [0.4, 0.2]
        assert rows[1].sup_error < rows[0].sup_error


class TestStudies:
    """Epsilon and grid refinement studies."""

    def test_epsilon_convergence(self, heat2, spectral):
        """Errors decrease with slope close to two."""
        study = epsilon_convergence_study(
            heat2,
            ConstantPath(np.diag([0.0, 1.0])),
            BumpSource([0.0, 0.0], 1.0),
            SMALL,
            (0.2, 0.1, 0.05),
            spectral,
        )
        assert study.monotone
        assert 1.5 < study.slope < 2.5
        assert 0.0 < study.final_relative_error < 1.0
        assert study.mode == "simultaneous"

    def test_epsilon_convergence_kolmogorov(self, kolmogorov, spectral):
        """The degenerate Kolmogorov problem with ``S = diag(0, 1)`` converges along the ladder."""
        study = epsilon_convergence_study(
            kolmogorov,
            ConstantPath(np.diag([0.0, 1.0])),
            BumpSource([0.0, 0.0], 1.0),
            SMALL,
            (0.4, 0.2, 0.1, 0.05),
            spectral,
            strict=True,
        )
        assert [row.epsilon for row in study.rows] == [0.4, 0.2, 0.1, 0.05]
        assert study.monotone
        assert study.slope >= 1.0
        assert study.final_relative_error < 1e-2

    def test_zero_perturbation(self, heat2, spectral):
        """Without perturbation the errors vanish and no slope is fitted."""
        study = epsilon_convergence_study(
            heat2,
            ConstantPath(np.zeros((2, 2))),
            BumpSource([0.0, 0.0], 1.0),
            SMALL,
            (0.4, 0.2),
            spectral,
            strict=True,
        )
        assert study.slope == 0.0
        assert study.monotone

    def test_refinement(self, heat2, spectral):
        """One table row per level with the relative change of the seminorm."""
        grid = SpaceTimeGrid.centered(0.25, 4, [4.0, 4.0], [16, 16])
        frame = refinement_study(
            heat2, BumpSource([0.0, 0.0], 1.0), grid, norm_pair("d2x_lp", heat2), spectral
        )
        assert list(frame.columns) == ["n", "nt", "value", "ratio", "relative_change"]
        assert frame["n"].tolist() == [16, 32]
        assert frame["nt"].tolist() == [4, 8]
        assert frame["relative_change"].iloc[0] == 0.0
        assert np.all(np.isfinite(frame["value"])) and frame["value"].iloc[1] > 0.0


if __name__ == "__main__":
    pytest.main(["-x", __file__])
