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
"""Experiments on the stability of regularity constants under second-order perturbations.

A norm pair (an output seminorm of the solution, an input norm of the source) defines the ratio
``||u||_out / ||f||_in``. The base constant is the largest ratio over a source suite for the
unperturbed operator; a stability experiment solves the perturbed problems
``u_t = Tr((B + S(t)) D^2 u) + <Az, Du> + f`` for a suite of non-negative perturbations ``S`` and
reports how far their ratios exceed the base constant.
"""

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from hypou.gaussian import (
    check_coverage,
    coverage_radius,
    covariance_integral,
    driftless_grid,
    push_to_ou,
    solve_ou,
)
from hypou.grid import Field, SpaceTimeGrid, source_field
from hypou.norms import d2_block_seminorm, holder_norm, lp_norm, ou_weight, sobolev_seminorm
from hypou.options import SolverConfig, derived_int_seed, log_verbose
from hypou.paths import (
    ConjugatedPath,
    ConstantPath,
    SampledPath,
    SinusoidalPath,
    SumPath,
    TimePSDPath,
    VanishingRankOnePath,
    zero_path,
)
from hypou.poisson import perturbed_solve_iterative
from hypou.sources import BumpSource, SourceFunction, TimeProfile
from hypou.structure import OUSystem, extract_block_structure, is_homogeneous
from hypou.types import ConvergenceRow, ConvergenceStudy, MaxPrincipleRow, StabilityReport
from hypou.utils.exceptions import ClassError, ExponentError, NonmonotoneConvergence

DELTA = 0.05
MAX_PRINCIPLE_TOL = 1e-8
NORM_PAIRS = ("d2x_lp", "sobolev", "sobolev_y", "schauder")
MODES = ("direct", "poisson-ladder")
DEFAULT_LADDER = (0.4, 0.2, 0.1, 0.05)


def harness_config(**kwargs) -> SolverConfig:
    """Solver options of the experiments: the spectral engine unless told otherwise."""
    return SolverConfig(**{"method": "spectral", **kwargs})


def kolmogorov_system() -> OUSystem:
    """``u_t = u_xx + x u_y``: the two-dimensional Kolmogorov operator."""
    return OUSystem([[0.0, 0.0], [1.0, 0.0]], [[1.0]])


def default_source_suite(dim: int = 2, count: int = 10) -> Dict[str, SourceFunction]:
    """Bumps with radii between 1 and 2 around the origin and varied time profiles.

    The last bump switches off halfway through the unit horizon.
    """
    profiles = [
        TimeProfile("constant"),
        TimeProfile("linear", a=0.5, b=1.0),
        TimeProfile("sine", a=1.0, b=0.5, period=1.0),
    ]
    suite = {}
    for j in range(count):
        angle = 2.0 * np.pi * j / count
        center = np.zeros(dim)
        center[0] = 0.8 * np.cos(angle)
        if dim > 1:
            center[1] = 0.8 * np.sin(angle)
        radius = 1.0 + j / max(count - 1, 1)
        if j == count - 1:
            profile = TimeProfile("step", before=1.0, after=0.0, breakpoint=0.5)
        else:
            profile = profiles[j % len(profiles)]
        suite[f"bump{j}"] = BumpSource(center, radius, 1.0, profile)
    return suite


def default_perturbation_suite(dim: int = 2, T: float = 1.0) -> Dict[str, TimePSDPath]:
    """Non-negative perturbations, several of them degenerate or vanishing on sub-intervals."""
    v = np.ones(dim) / np.sqrt(dim)
    partial = np.zeros((dim, dim))
    partial[-1, -1] = 0.5
    zeros = np.zeros((dim, dim))
    return {
        "zero": zero_path(dim),
        "isotropic": ConstantPath(0.5 * np.eye(dim)),
        "rank1": ConstantPath(np.outer(v, v)),
        "rank1-vanishing": VanishingRankOnePath(v, T),
        "oscillating": SinusoidalPath(zeros, np.diag(np.linspace(0.5, 0.25, dim)), 0.5 * T),
        "degenerate-subinterval": SampledPath(
            [0.0, 0.3 * T, 0.5 * T, 0.7 * T, T], [zeros, zeros, partial, zeros, zeros]
        ),
    }


# pylint: disable=too-many-arguments
def covering_grid(
    system: OUSystem,
    sources: Sequence[SourceFunction],
    perturbations: Sequence[TimePSDPath] = (),
    T: float = 1.0,
    nt: int = 64,
    n: int = 64,
    band: int = 2,
    cfg: Optional[SolverConfig] = None,
) -> SpaceTimeGrid:
    """Centred cubic box covering every (source, perturbation) solve of a suite."""
    cfg = cfg or SolverConfig()
    radius = 0.0
    for S in list(perturbations) or [zero_path(system.N)]:
        Q = SumPath([ConstantPath(system.B), S])
        cov = covariance_integral(system.A, Q, 0.0, T, cfg)
        radius = max([radius] + [coverage_radius(f, cov) for f in sources])
    half = radius * (1.0 + 4.0 / n)
    return SpaceTimeGrid.centered(T, nt, [half] * system.N, [n] * system.N, band)


@dataclass(frozen=True)
class NormPair:
    """An output seminorm of solutions and an input norm of sources."""

    name: str
    output_name: str
    input_name: str
    output: Callable[[Field], float]
    input: Callable[[Field], float]

    @property
    def estimator(self) -> List[str]:
        """Names of the two norms."""
        return [self.output_name, self.input_name]

    def ratio(self, u: Field, f: Field) -> float:
        """``||u||_out / ||f||_in``; zero over zero counts as zero."""
        out, inp = self.output(u), self.input(f)
        if inp > 0:
            return float(out / inp)
        return 0.0 if out == 0 else float(np.inf)


def norm_pair(
    name: str, system: OUSystem, p: float = 2.0, beta: float = 0.5, extension: str = "zero"
) -> NormPair:
    """Build one of the norm pairs ``d2x_lp``, ``sobolev``, ``sobolev_y`` or ``schauder``."""
    bs = extract_block_structure(system)
    weight = ou_weight(system.A)

    def lp_input(f: Field) -> float:
        return lp_norm(f, p, weight)

    if name == "d2x_lp":
        return NormPair(
            name,
            f"d2x_lp(p={p:g})",
            f"lp(p={p:g})",
            lambda u: d2_block_seminorm(u, bs, p, weight),
            lp_input,
        )
    if name in ("sobolev", "sobolev_y"):
        if name == "sobolev_y" and bs.k < 1:
            raise ValueError("The sobolev_y pair needs at least one degenerate block")
        key = "y1" if name == "sobolev_y" else None

        def sobolev_output(u: Field) -> float:
            report = sobolev_seminorm(u, bs, p, weight, extension)
            return report.components[key] if key else report.value

        label = f"{'sobolev_aniso.y1' if key else 'sobolev_aniso'}(p={p:g})"
        return NormPair(name, label, f"lp(p={p:g})", sobolev_output, lp_input)
    if name == "schauder":
        if not 0.0 < beta < 1.0:
            raise ExponentError(f"Schauder exponent must lie in (0, 1), got {beta}")

        def holder_sup(field: Field, gamma: float) -> float:
            return max(holder_norm(s, gamma, bs, field.grid).value for s in field.values)

        return NormPair(
            name,
            f"holder_aniso(gamma={2 + beta:g})",
            f"holder_aniso(gamma={beta:g})",
            lambda u: holder_sup(u, 2.0 + beta),
            lambda f: holder_sup(f, beta),
        )
    raise ValueError(f"Unknown norm pair '{name}', expected one of {NORM_PAIRS}")


# pylint: disable=too-many-arguments,too-many-locals
def ladder_solve(
    system: OUSystem,
    f: SourceFunction,
    S: TimePSDPath,
    grid: SpaceTimeGrid,
    eps_ladder: Sequence[float] = DEFAULT_LADDER,
    cfg: Optional[SolverConfig] = None,
    mode: str = "simultaneous",
) -> Tuple[Field, List[ConvergenceRow]]:
    """Perturbed OU solve through drift removal and the central-difference epsilon ladder.

    The driftless problem has diffusion ``e^{tA}Be^{tA*}``, perturbation ``e^{tA}S(t)e^{tA*}`` and
    source ``f(t, e^{-tA}z)``; the smallest-epsilon field is pushed back onto ``grid``.
    """
    cfg = cfg or harness_config()
    A = system.A
    if not np.any(A):
        return perturbed_solve_iterative(ConstantPath(system.B), S, f, grid, eps_ladder, mode, cfg)
    Q, Qp = ConjugatedPath(A, ConstantPath(system.B)), ConjugatedPath(A, S)
    fc = f.pullback(A, grid.T)
    dgrid = driftless_grid(A, grid, SumPath([Q, Qp]), fc, cfg)
    w, rows = perturbed_solve_iterative(Q, Qp, fc, dgrid, eps_ladder, mode, cfg)
    u = push_to_ou(w, A, grid)
    u.provenance = {**w.provenance, "map": "push"}
    return u, rows


def solve_perturbed(
    system: OUSystem,
    f: SourceFunction,
    S: Optional[TimePSDPath],
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    seed: int = 0,
    mode: str = "direct",
    eps_ladder: Sequence[float] = DEFAULT_LADDER,
) -> Field:
    """Solve the perturbed OU problem, directly or through the epsilon ladder."""
    cfg = cfg or harness_config()
    if mode == "direct":
        return solve_ou(system, f, grid, cfg, seed, perturbation=S)
    if mode == "poisson-ladder":
        S = S if S is not None else zero_path(system.N)
        field, _ = ladder_solve(system, f, S, grid, eps_ladder, cfg)
        field.source_sup = _source_sup(f, grid)
        return field
    raise ValueError(f"Unknown mode '{mode}', expected one of {MODES}")


def _source_sup(f: SourceFunction, grid: SpaceTimeGrid) -> float:
    try:
        return float(f.sup_bound(grid.T))
    except (ValueError, NotImplementedError):
        return source_field(f, grid).sup()


def estimate_constant(
    system: OUSystem,
    f_suite: Dict[str, SourceFunction],
    pair: NormPair,
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    seed: int = 0,
) -> float:
    """``max_f ||u_f||_out / ||f||_in`` over the suite for the unperturbed operator.

    This is a lower bound of the true constant of the estimate.
    """
    if not f_suite:
        raise ValueError("The source suite is empty")
    cfg = cfg or harness_config()
    ratios = []
    for j, f in enumerate(f_suite.values()):
        u = solve_ou(system, f, grid, cfg, derived_int_seed(seed, j))
        ratios.append(pair.ratio(u, source_field(f, grid)))
    return float(max(ratios))


def max_principle_row(
    name: str, field: Field, T: Optional[float] = None, tol: float = MAX_PRINCIPLE_TOL
) -> MaxPrincipleRow:
    """Check ``sup |v| <= T sup |f|`` for one field; the field must carry ``source_sup``."""
    if field.source_sup is None:
        raise ValueError(f"Field '{name}' does not record the sup of its source")
    horizon = field.grid.T if T is None else T
    bound = horizon * field.source_sup
    sup = field.sup()
    return MaxPrincipleRow(name, sup, bound, bool(sup <= bound + tol))


def max_principle_suite(
    fields: Dict[str, Field], tol: float = MAX_PRINCIPLE_TOL
) -> List[MaxPrincipleRow]:
    """Maximum-principle table of every solved field of a run."""
    return [max_principle_row(name, field, tol=tol) for name, field in fields.items()]


# pylint: disable=too-many-arguments,too-many-locals
def stability_experiment(
    system: OUSystem,
    S_suite: Dict[str, TimePSDPath],
    f_suite: Dict[str, SourceFunction],
    pair: NormPair,
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    mode: str = "direct",
    seed: int = 0,
    delta: float = DELTA,
    eps_ladder: Sequence[float] = DEFAULT_LADDER,
) -> StabilityReport:
    """Ratios of every (source, perturbation) pair against the unperturbed base constant.

    Zero perturbations reuse the base solves. Solves run in parallel over the suite entries and
    are collected in suite order; source ``j`` uses the seed derived from ``(seed, j)``.
    """
    if not f_suite or not S_suite:
        raise ValueError("Source and perturbation suites must be non-empty")
    if mode not in MODES:
        raise ValueError(f"Unknown mode '{mode}', expected one of {MODES}")
    cfg = cfg or harness_config()
    f_names, S_names = list(f_suite), list(S_suite)
    seeds = [derived_int_seed(seed, j) for j in range(len(f_names))]
    tasks = [(a, None) for a in range(len(f_names))]
    tasks += [
        (a, b)
        for a in range(len(f_names))
        for b, name in enumerate(S_names)
        if not S_suite[name].is_zero()
    ]

    def run(task):
        a, b = task
        start = time.perf_counter()
        S = None if b is None else S_suite[S_names[b]]
        f = f_suite[f_names[a]]
        field = solve_perturbed(system, f, S, grid, cfg, seeds[a], mode, eps_ladder)
        ratio = pair.ratio(field, source_field(f, grid))
        log_verbose(cfg, "HARNESS", f"{f_names[a]} / {'base' if b is None else S_names[b]}")
        return field, ratio, time.perf_counter() - start

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        results = dict(zip(tasks, executor.map(run, tasks)))

    base = [results[(a, None)][1] for a in range(len(f_names))]
    ratios, rows = [], []
    for a, f_name in enumerate(f_names):
        rows.append(max_principle_row(f"{f_name}/base", results[(a, None)][0]))
        row = []
        for b, S_name in enumerate(S_names):
            key = (a, None) if S_suite[S_name].is_zero() else (a, b)
            field, ratio, _ = results[key]
            row.append(ratio)
            if key[1] is not None:
                rows.append(max_principle_row(f"{f_name}/{S_name}", field))
        ratios.append(row)

    c_hat = float(max(base))
    matrix = np.array(ratios)
    a, b = np.unravel_index(int(np.argmax(matrix)), matrix.shape)
    if c_hat > 0:
        margin = float(matrix[a, b] / c_hat)
    else:
        margin = 1.0 if not np.any(matrix) else float(np.inf)
    runtimes = {"total": time.perf_counter() - start}
    for (a_idx, b_idx), (_, _, seconds) in results.items():
        label = "base" if b_idx is None else S_names[b_idx]
        runtimes[f"{f_names[a_idx]}/{label}"] = seconds
    report = StabilityReport(
        estimator=pair.estimator,
        sources=f_names,
        perturbations=S_names,
        ratios=ratios,
        c_hat_base=c_hat,
        margin=margin,
        argmax=[f_names[a], S_names[b]],
        delta=float(delta),
        passed=bool(margin <= 1.0 + delta),
        mode=mode,
        seeds=seeds,
        grid=grid.to_dict(),
        max_principle=rows,
        runtimes=runtimes,
    )
    log_verbose(cfg, "HARNESS", f"{pair.name}: C_base={c_hat:.6g}, margin={margin:.6g}")
    return report


def sobolev_stability(
    system: OUSystem,
    S_suite: Dict[str, TimePSDPath],
    f_suite: Dict[str, SourceFunction],
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    p: float = 2.0,
    component: bool = False,
    **kwargs,
) -> StabilityReport:
    """Stability of the anisotropic Sobolev estimate (or of its ``y1`` component).

    Raises:
        ClassError: if the drift has non-zero diagonal or upper blocks.
    """
    bs = extract_block_structure(system)
    if not is_homogeneous(system, bs):
        raise ClassError("The Sobolev estimate is stated for drifts with vanishing upper blocks")
    pair = norm_pair("sobolev_y" if component else "sobolev", system, p)
    return stability_experiment(system, S_suite, f_suite, pair, grid, cfg, **kwargs)


def schauder_stability(
    system: OUSystem,
    beta: float,
    S_suite: Dict[str, TimePSDPath],
    f_suite: Dict[str, SourceFunction],
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    **kwargs,
) -> StabilityReport:
    """Stability of the Schauder estimate ``C^{2+beta}`` of solutions against ``C^beta`` of sources.

    Raises:
        ExponentError: if ``beta`` is outside ``(0, 1)``.
    """
    pair = norm_pair("schauder", system, beta=beta)
    return stability_experiment(system, S_suite, f_suite, pair, grid, cfg, **kwargs)


# pylint: disable=too-many-arguments
def epsilon_convergence_study(
    system: OUSystem,
    S: TimePSDPath,
    f: SourceFunction,
    grid: SpaceTimeGrid,
    eps_ladder: Sequence[float] = DEFAULT_LADDER,
    cfg: Optional[SolverConfig] = None,
    mode: str = "simultaneous",
    strict: bool = False,
) -> ConvergenceStudy:
    """Error of the epsilon ladder against the direct Gaussian solve, with its log-log slope.

    Errors are measured on the driftless problem. In strict mode a non-decreasing error raises
    :class:`NonmonotoneConvergence` instead of warning.
    """
    cfg = cfg or harness_config()
    A = system.A
    Q, Qp = ConjugatedPath(A, ConstantPath(system.B)), ConjugatedPath(A, S)
    fc = f.pullback(A, grid.T) if np.any(A) else f
    dgrid = driftless_grid(A, grid, SumPath([Q, Qp]), fc, cfg) if np.any(A) else grid
    check_coverage(dgrid, fc, covariance_integral(0.0, SumPath([Q, Qp]), 0.0, grid.T, cfg))
    with warnings.catch_warnings():
        if strict:
            warnings.simplefilter("error", NonmonotoneConvergence)
        field, rows = perturbed_solve_iterative(Q, Qp, fc, dgrid, eps_ladder, mode, cfg)
    errors = np.array([row.sup_error for row in rows])
    eps = np.array([row.epsilon for row in rows])
    positive = errors > 0
    slope = 0.0
    if np.count_nonzero(positive) >= 2:
        slope = float(np.polyfit(np.log(eps[positive]), np.log(errors[positive]), 1)[0])
    scale = field.sup()
    final = float(errors[-1] / scale) if scale > 0 else float(errors[-1])
    monotone = bool(all(b < a or (a <= 1e-12 and b <= 1e-12) for a, b in zip(errors, errors[1:])))
    return ConvergenceStudy(mode, rows, slope, final, monotone)


def refinement_study(
    system: OUSystem,
    f: SourceFunction,
    grid: SpaceTimeGrid,
    pair: NormPair,
    cfg: Optional[SolverConfig] = None,
    levels: int = 2,
) -> pd.DataFrame:
    """Output seminorm and ratio of one source under repeated grid doubling.

    Columns: ``n``, ``nt``, ``value``, ``ratio`` and ``relative_change`` of the value against the
    previous level.
    """
    cfg = cfg or harness_config()
    records, current = [], grid
    for level in range(levels):
        if level:
            current = current.refined(2)
        u = solve_ou(system, f, current, cfg)
        value = pair.output(u)
        records.append(
            {
                "n": current.n[0],
                "nt": current.nt,
                "value": value,
                "ratio": pair.ratio(u, source_field(f, current)),
            }
        )
    frame = pd.DataFrame(records)
    frame["relative_change"] = frame["value"].pct_change().abs().fillna(0.0)
    return frame
