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
"""Poisson jump paths and the jump-driven approximation of second-order perturbations.

A perturbation ``Tr(Q'(t) D^2)`` is approached through translations of size ``epsilon l(t)``,
``l(t) = sqrt(Q'(t)) e_k``, driven by a Poisson process of intensity ``lambda = epsilon^-2``.
Averaging over the jumps gives the one-sided difference equation

    w_t = Tr(Q D^2 w) + lambda (w(z + epsilon l) - w(z)) + f,

and the two-pass construction gives its central counterpart
``lambda (w(z + epsilon l) - 2 w(z) + w(z - epsilon l))``, which tends to ``Tr(Q' D^2 w)``.
Both difference equations are solved deterministically with the Fourier engine of
:mod:`hypou.gaussian`; the bounded jump generator is frozen at the midpoint of every split step.
"""

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from copy import deepcopy
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.integrate import quad_vec, trapezoid

from hypou.gaussian import (
    check_coverage,
    covariance_integral,
    diffusion_multipliers,
    solve_driftless,
    source_transform,
    spectral_march,
    time_schedule,
)
from hypou.grid import Field, SpaceTimeGrid, linear_symbol, wavenumbers
from hypou.norms import lp_norm
from hypou.options import SolverConfig, log_verbose, path_seed
from hypou.paths import DirectionalPath, SumPath, TimePSDPath, direction_sampler, zero_path
from hypou.sources import SourceFunction
from hypou.types import ConvergenceRow, ExpectationReport, KSReport
from hypou.utils.exceptions import (
    DimensionError,
    MonteCarloBudgetError,
    NonmonotoneConvergence,
    SplitStepError,
)

KS_CRITICAL_5 = 1.358
Z_LIMIT = 3.0
JUMP_QUANTILE = 1.0 - 1e-6
BATCH_PATHS = 64
LADDER_MODES = ("simultaneous", "sequential")


def rate(epsilon: float) -> float:
    """Jump intensity ``lambda = epsilon^-2`` coupled to a step size."""
    if epsilon <= 0:
        raise ValueError(f"Step size must be positive, got {epsilon}")
    return float(epsilon) ** -2


@dataclass
class PoissonPath:
    """One realization of a Poisson process on ``[0, T]``.

    Fields:
        lam: intensity
        T: horizon
        jump_times: increasing jump times in ``(0, T]``
        seed: seed the path was drawn with, if any
    """

    lam: float
    T: float
    jump_times: np.ndarray
    seed: Optional[object] = None

    def __post_init__(self):
        self.jump_times = np.asarray(self.jump_times, dtype=float).ravel()
        if self.lam <= 0 or self.T <= 0:
            raise ValueError("A Poisson path needs lam > 0 and T > 0")
        if np.any(np.diff(self.jump_times) <= 0):
            raise ValueError("Jump times must be strictly increasing")
        if self.jump_times.size and (self.jump_times[0] < 0 or self.jump_times[-1] > self.T):
            raise ValueError("Jump times must lie in [0, T]")

    @property
    def n_jumps(self) -> int:
        """``pi_T``."""
        return int(self.jump_times.size)

    def count(self, t):
        """``pi_t``, the number of jumps up to and including ``t`` (vectorized)."""
        out = np.searchsorted(self.jump_times, t, side="right")
        return out if np.ndim(out) else int(out)

    @property
    def interarrivals(self) -> np.ndarray:
        """Gaps ``sigma_1 - 0, sigma_2 - sigma_1, ...`` between realized jumps."""
        return np.diff(np.concatenate([[0.0], self.jump_times]))


def sample_poisson_path(lam: float, T: float, seed=None) -> PoissonPath:
    """Jump times as cumulative sums of exponential(``lam``) draws, truncated at ``T``.

    Args:
        lam (float): intensity.
        T (float): horizon.
        seed: anything ``numpy.random.default_rng`` accepts.
    """
    if lam <= 0 or T <= 0:
        raise ValueError("A Poisson path needs lam > 0 and T > 0")
    rng = np.random.default_rng(seed)
    mean = lam * T
    chunk = max(16, int(np.ceil(mean + 5.0 * np.sqrt(mean))) + 1)
    pieces, last = [], 0.0
    while True:
        draws = last + np.cumsum(rng.exponential(1.0 / lam, size=chunk))
        kept = draws[draws <= T]
        pieces.append(kept)
        if kept.size < chunk:
            break
        last = draws[-1]
    return PoissonPath(lam, T, np.concatenate(pieces), seed)


def sample_poisson_ensemble(lam: float, T: float, n_paths: int, seed: int = 0) -> List[PoissonPath]:
    """``n_paths`` independent paths; path ``i`` uses the seed derived from ``(seed, i)``."""
    return [sample_poisson_path(lam, T, path_seed(seed, i)) for i in range(n_paths)]


def poisson_integral(c: Callable[[float], np.ndarray], path: PoissonPath, t: float):
    """``int_0^t c(s) dpi_s = sum_{sigma_k <= t} c(sigma_k)``."""
    jumps = path.jump_times[: path.count(t)]
    if not jumps.size:
        return np.zeros_like(np.asarray(c(0.0), dtype=float))
    total = np.asarray(c(jumps[0]), dtype=float)
    for s in jumps[1:]:
        total = total + np.asarray(c(s), dtype=float)
    return total


def _z_score(diff: float, std_error: float) -> float:
    if std_error > 0:
        return float(diff / std_error)
    return 0.0 if diff == 0 else float(np.inf)


def integral_expectation_check(
    c: Callable[[float], float],
    lam: float,
    t: float,
    n_paths: int,
    seed: int = 0,
    name: str = "integral",
) -> ExpectationReport:
    """Monte Carlo check of ``E int_0^t c dpi = lam int_0^t c(s) ds`` for a scalar ``c``."""
    paths = sample_poisson_ensemble(lam, t, n_paths, seed)
    samples = np.array([float(poisson_integral(c, p, t)) for p in paths])
    rhs = lam * float(quad_vec(lambda s: np.asarray(c(s), dtype=float), 0.0, t)[0])
    lhs = float(np.mean(samples))
    std_error = float(np.std(samples, ddof=1) / np.sqrt(n_paths))
    z = _z_score(lhs - rhs, std_error)
    return ExpectationReport(name, lhs, rhs, std_error, z, n_paths, bool(abs(z) <= Z_LIMIT))


def expectation_identity_check(
    xi: Callable[[PoissonPath, np.ndarray], np.ndarray],
    paths: Sequence[PoissonPath],
    t: float,
    name: str = "identity",
    n_time: int = 4097,
) -> ExpectationReport:
    """Paired Monte Carlo check of ``E int_0^t xi_{s-} dpi_s = lam int_0^t E xi_s ds``.

    Args:
        xi (Callable): bounded adapted process, ``xi(path, times)`` vectorized over times.
        paths (Sequence[PoissonPath]): the ensemble, all with the same intensity.
        t (float): end time.
        name (str): report name.
        n_time (int): trapezoid nodes of the time integral on the right-hand side.
    """
    if not paths:
        raise ValueError("The path ensemble is empty")
    lam = paths[0].lam
    if any(p.lam != lam for p in paths):
        raise ValueError("All paths of the ensemble must share the intensity")
    grid = np.linspace(0.0, t, n_time)
    lhs, rhs = np.empty(len(paths)), np.empty(len(paths))
    for i, path in enumerate(paths):
        jumps = path.jump_times[: path.count(t)]
        left = np.nextafter(jumps, -np.inf)
        lhs[i] = float(np.sum(xi(path, left))) if jumps.size else 0.0
        rhs[i] = lam * float(trapezoid(xi(path, grid), grid))
    diff = lhs - rhs
    std_error = float(np.std(diff, ddof=1) / np.sqrt(len(paths)))
    z = _z_score(float(np.mean(diff)), std_error)
    return ExpectationReport(
        name,
        float(np.mean(lhs)),
        float(np.mean(rhs)),
        std_error,
        z,
        len(paths),
        bool(abs(z) <= Z_LIMIT),
    )


def interarrival_ks(lam: float, n: int, seed: int = 0) -> KSReport:
    """Kolmogorov-Smirnov test of ``n`` consecutive inter-arrival times against exponential(lam).

    The test passes when the statistic stays below the 5% critical value ``1.358 / sqrt(n)``.
    """
    if n < 2:
        raise ValueError("The KS test needs at least two samples")
    horizon = (n + 10.0 * np.sqrt(n) + 10.0) / lam
    path = sample_poisson_path(lam, horizon, seed)
    while path.n_jumps < n:
        horizon *= 2.0
        path = sample_poisson_path(lam, horizon, seed)
    gaps = path.interarrivals[:n]
    result = stats.kstest(gaps, "expon", args=(0.0, 1.0 / lam))
    critical = KS_CRITICAL_5 / np.sqrt(n)
    return KSReport(
        float(result.statistic),
        float(critical),
        float(result.pvalue),
        n,
        bool(result.statistic < critical),
    )


class JumpDrivenShift:
    """``X_t = int_0^t l(r) dpi_r = sum_{sigma_j <= t} l(sigma_j)`` with ``l = sqrt(Q') e_k``.

    Args:
        path (PoissonPath): jump times; its intensity must be ``epsilon^-2`` unless
            ``epsilon == 0``.
        Qp (TimePSDPath): the perturbation ``Q'``.
        k (int): direction index.
        epsilon (float): step size.
    """

    def __init__(self, path: PoissonPath, Qp: TimePSDPath, k: int, epsilon: float):
        if epsilon < 0:
            raise ValueError(f"Step size must be non-negative, got {epsilon}")
        if epsilon > 0 and not np.isclose(path.lam, rate(epsilon), rtol=1e-12, atol=0.0):
            raise ValueError(f"Path intensity {path.lam} differs from epsilon^-2 = {rate(epsilon)}")
        self.path, self.Qp, self.k, self.epsilon = path, Qp, int(k), float(epsilon)
        self.direction = direction_sampler(Qp, k)
        jumps = self.direction(path.jump_times) if path.n_jumps else np.zeros((0, Qp.dim))
        self._cumulative = np.vstack([np.zeros(Qp.dim), np.cumsum(jumps, axis=0)])

    @classmethod
    def sample(cls, Qp: TimePSDPath, k: int, epsilon: float, T: float, seed=None):
        """Draw the path with intensity ``epsilon^-2`` and build the shift."""
        return cls(sample_poisson_path(rate(epsilon), T, seed), Qp, k, epsilon)

    def X(self, t):
        """``X_t``, shape ``(N,)`` for scalar ``t`` and ``(len(t), N)`` for arrays."""
        return self._cumulative[self.path.count(t)]

    def displacement(self, t):
        """``epsilon X_t``."""
        return self.epsilon * self.X(t)

    def sup_norm(self) -> float:
        """``max_t |X_t|``."""
        return float(np.max(np.linalg.norm(self._cumulative, axis=1)))

    def is_trivial(self) -> bool:
        """Whether the shift vanishes identically."""
        return self.epsilon == 0.0 or not np.any(self._cumulative)


def shifted_solve(
    Q: TimePSDPath,
    f: SourceFunction,
    shift: JumpDrivenShift,
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    seed: int = 0,
) -> Field:
    """``v_eps = PDE(Q, f_eps)`` for the shifted source ``f_eps(t, z) = f(t, z - eps X_t)``.

    Raises:
        CoverageError: if the box misses the support inflated by ``eps max |X|``.
    """
    if shift.is_trivial():
        return solve_driftless(Q, f, grid, cfg, seed)
    jumps = shift.path.jump_times[shift.path.jump_times <= grid.T]
    shifted = f.shifted(shift.displacement, jumps, shift.epsilon * shift.sup_norm())
    field = solve_driftless(Q, shifted, grid, cfg, seed)
    field.provenance["shift"] = {"epsilon": shift.epsilon, "k": shift.k, "jumps": int(jumps.size)}
    return field


def fd_substeps(grid: SpaceTimeGrid, epsilon: float, cfg: Optional[SolverConfig] = None) -> int:
    """Sub-slices per output slice such that every split step obeys ``lambda dt <= 1/2``.

    Raises:
        SplitStepError: if an explicit ``cfg.split_dt`` violates the bound.
    """
    cfg = cfg or SolverConfig()
    lam = rate(epsilon)
    if cfg.split_dt is not None:
        if cfg.split_dt * lam > 0.5:
            raise SplitStepError(f"split_dt * lambda = {cfg.split_dt * lam:.4g} exceeds 1/2")
        dt = cfg.split_dt
    else:
        dt = 0.5 / lam
    return max(cfg.substeps, int(np.ceil(grid.T / grid.nt / dt - 1e-9)))


def forward_difference(phi: Callable, z, direction, epsilon: float):
    """One-sided jump generator ``epsilon^-2 (phi(z + epsilon l) - phi(z))``."""
    z = np.asarray(z, dtype=float)
    step = float(epsilon) * np.asarray(direction, dtype=float)
    return rate(epsilon) * (phi(z + step) - phi(z))


def central_difference(phi: Callable, z, direction, epsilon: float):
    """Central generator ``epsilon^-2 (phi(z + epsilon l) - 2 phi(z) + phi(z - epsilon l))``."""
    z = np.asarray(z, dtype=float)
    step = float(epsilon) * np.asarray(direction, dtype=float)
    return rate(epsilon) * (phi(z + step) - 2.0 * phi(z) + phi(z - step))


def _directions(k: Union[int, Sequence[int]], dim: int) -> List[int]:
    ks = [int(k)] if np.isscalar(k) else [int(j) for j in k]
    if not ks or any(not 0 <= j < dim for j in ks):
        raise DimensionError(f"Direction indices {ks} outside 0..{dim - 1}")
    return ks


def _max_direction(Qp: TimePSDPath, ks: Sequence[int], T: float, n: int = 129) -> float:
    times = np.linspace(0.0, T, n)
    return max(float(np.max(np.linalg.norm(direction_sampler(Qp, k)(times), axis=1))) for k in ks)


def _jump_reach(epsilon: float, lmax: float, T: float, n_directions: int) -> float:
    """Distance covered by one-sided jumps with probability ``1 - 1e-6``."""
    jumps = float(stats.poisson.ppf(JUMP_QUANTILE, rate(epsilon) * T))
    return n_directions * epsilon * lmax * jumps


# pylint: disable=too-many-arguments,too-many-locals
def _fd_solve(Q, Qp, epsilon, k, f, grid, cfg, central, substeps=None) -> Field:
    cfg = cfg or SolverConfig()
    for what, dim in (("diffusion path", Q.dim), ("perturbation", Qp.dim), ("source", f.dim)):
        if dim != grid.dim:
            raise DimensionError(f"The {what} has dimension {dim}, expected {grid.dim}")
    ks = _directions(k, grid.dim)
    lam = rate(epsilon)
    substeps = substeps or fd_substeps(grid, epsilon, cfg)
    schedule = time_schedule(grid, f.time_breakpoints, substeps)
    if np.max(schedule.steps) * lam > 0.5 * (1.0 + 1e-9):
        raise SplitStepError(f"split step {np.max(schedule.steps):.4g} violates lambda dt <= 1/2")

    base = SumPath([Q, zero_path(grid.dim)])
    lmax = _max_direction(Qp, ks, grid.T)
    if central:
        spread = SumPath([Q] + [DirectionalPath(Qp, j) for j in ks])
        check_coverage(grid, f, covariance_integral(0.0, spread, 0.0, grid.T, cfg), epsilon * lmax)
    else:
        reach = _jump_reach(epsilon, lmax, grid.T, len(ks))
        check_coverage(grid, f, covariance_integral(0.0, Q, 0.0, grid.T, cfg), reach)

    wave = wavenumbers(grid)
    multipliers = diffusion_multipliers(base, schedule, wave, cfg)
    samplers = [direction_sampler(Qp, j) for j in ks]
    nodes = schedule.nodes
    for j, dt in enumerate(schedule.steps):
        mid = 0.5 * (nodes[j] + nodes[j + 1])
        generator = 0.0
        for sampler in samplers:
            phase = epsilon * linear_symbol(wave, sampler(mid)[0])
            if central:
                generator = generator + lam * (2.0 * np.cos(phase) - 2.0)
            else:
                generator = generator + lam * (np.exp(1j * phase) - 1.0)
        if np.any(generator):
            multipliers[j] = multipliers[j] * np.exp(dt * generator)
    name = "fd-two" if central else "fd-one"
    log_verbose(cfg, "POISSON", f"{name} solve, epsilon={epsilon}, {len(nodes) - 1} split steps")
    values = spectral_march(grid, schedule, multipliers, source_transform(f, grid.points()), cfg)
    provenance = {
        "solver": name,
        "method": "spectral",
        "epsilon": float(epsilon),
        "directions": ks,
        "substeps": substeps,
    }
    return Field(grid, values, provenance, None, _sup_or_none(f, grid.T))


def _sup_or_none(f: SourceFunction, T: float) -> Optional[float]:
    try:
        return float(f.sup_bound(T))
    except (ValueError, NotImplementedError):
        return None


def solve_fd_one(
    Q: TimePSDPath,
    Qp: TimePSDPath,
    epsilon: float,
    k: Union[int, Sequence[int]],
    f: SourceFunction,
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
) -> Field:
    """Solve ``w_t = Tr(Q D^2 w) + lambda (w(z + eps l(t)) - w(z)) + f`` with ``lambda = eps^-2``.

    Args:
        Q (TimePSDPath): diffusion path.
        Qp (TimePSDPath): perturbation ``Q'``; ``l(t) = sqrt(Q'(t)) e_k``.
        epsilon (float): step size.
        k (Union[int, Sequence[int]]): direction index, or several directions whose jump terms
            are all kept.
        f (SourceFunction): source.
        grid (SpaceTimeGrid): output grid.
        cfg (Optional[SolverConfig]): solver options; ``split_dt`` and ``substeps`` set the split
            schedule.

    Raises:
        SplitStepError: if a split step violates ``lambda dt <= 1/2``.
        CoverageError: if the box misses the region reached by the jumps.
    """
    return _fd_solve(Q, Qp, epsilon, k, f, grid, cfg, central=False)


def solve_fd_two(
    Q: TimePSDPath,
    Qp: TimePSDPath,
    epsilon: float,
    k: Union[int, Sequence[int]],
    f: SourceFunction,
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
) -> Field:
    """Solve ``w_t = Tr(Q D^2 w) + eps^-2 (w(z + eps l) - 2 w(z) + w(z - eps l)) + f``.

    Arguments and errors are those of :func:`solve_fd_one`.
    """
    return _fd_solve(Q, Qp, epsilon, k, f, grid, cfg, central=True)


def _path_nodes_X(lam, T, Qp, k, epsilon, nodes, seeds) -> np.ndarray:
    """``X`` at every node for a batch of paths, shape ``(batch, nodes, N)``."""
    out = []
    for s in seeds:
        shift = JumpDrivenShift(sample_poisson_path(lam, T, s), Qp, k, epsilon)
        out.append(shift.X(nodes))
    return np.stack(out)


def _phases(wave, X: np.ndarray, sign: float, epsilon: float) -> np.ndarray:
    """``exp(sign i eps k . X_b)`` for every row ``X_b``, shape ``(batch,) + spectrum``."""
    arg = 0.0
    for a, ka in enumerate(wave):
        arg = arg + X[:, a].reshape((-1,) + (1,) * ka.ndim) * ka[None]
    return np.exp(sign * 1j * epsilon * arg)


# pylint: disable=too-many-arguments,too-many-locals
def averaged_shifted_solve(
    Q: TimePSDPath,
    Qp: TimePSDPath,
    f: SourceFunction,
    epsilon: float,
    k: int,
    grid: SpaceTimeGrid,
    n_paths: int,
    seed: int = 0,
    cfg: Optional[SolverConfig] = None,
) -> Field:
    """``bar v_eps(t, z) = E[v_eps(t, z + eps X_t)]`` by Monte Carlo over Poisson paths.

    Every realization is solved exactly in Fourier space, where the shifts are phases; paths are
    processed in fixed batches whose partial sums are accumulated in batch order, so the result
    does not depend on ``cfg.workers``. Per-node standard errors are attached to the field.

    Raises:
        MonteCarloBudgetError: if ``n_paths`` exceeds ``cfg.max_paths``.
        CoverageError: if the box misses the region reached by the jumps.
    """
    cfg = cfg or SolverConfig()
    if n_paths > cfg.max_paths:
        raise MonteCarloBudgetError(f"{n_paths} paths requested, the budget is {cfg.max_paths}")
    if n_paths < 2:
        raise ValueError("At least two paths are needed for a standard error")
    for what, dim in (("diffusion path", Q.dim), ("perturbation", Qp.dim), ("source", f.dim)):
        if dim != grid.dim:
            raise DimensionError(f"The {what} has dimension {dim}, expected {grid.dim}")
    lam, T = rate(epsilon), grid.T
    substeps = fd_substeps(grid, epsilon, cfg)
    schedule = time_schedule(grid, f.time_breakpoints, substeps)
    base = SumPath([Q, zero_path(grid.dim)])
    wave = wavenumbers(grid)
    multipliers = diffusion_multipliers(base, schedule, wave, cfg)
    transform = source_transform(f, grid.points())
    provenance = {
        "solver": "averaged-shift",
        "method": "spectral",
        "epsilon": float(epsilon),
        "directions": [int(k)],
        "n_paths": int(n_paths),
        "seed": int(seed),
        "substeps": substeps,
    }
    sup = _sup_or_none(f, T)
    if Qp.is_zero():
        values = spectral_march(grid, schedule, multipliers, transform, cfg)
        return Field(grid, values, provenance, np.zeros(grid.shape), sup)

    reach = _jump_reach(epsilon, _max_direction(Qp, [k], T), T, 1)
    check_coverage(grid, f, covariance_integral(0.0, Q, 0.0, T, cfg), reach)
    right = [transform(t) for t in schedule.right_times]
    left = [transform(t) for t in schedule.left_times]
    outputs = {int(J): m for m, J in enumerate(schedule.outputs)}
    axes = tuple(range(1, grid.dim + 1))

    def run_batch(start: int) -> Tuple[np.ndarray, np.ndarray]:
        seeds = [path_seed(seed, i) for i in range(start, min(start + BATCH_PATHS, n_paths))]
        X = _path_nodes_X(lam, T, Qp, k, epsilon, schedule.nodes, seeds)
        total, squares = np.zeros(grid.shape), np.zeros(grid.shape)
        W = np.zeros((len(seeds),) + right[0].shape, dtype=complex)
        phase = _phases(wave, X[:, 0], -1.0, epsilon)
        for j, dt in enumerate(schedule.steps):
            next_phase = _phases(wave, X[:, j + 1], -1.0, epsilon)
            W = multipliers[j] * (W + 0.5 * dt * phase * right[j])
            W = W + 0.5 * dt * next_phase * left[j + 1]
            phase = next_phase
            if j + 1 in outputs:
                shifted = np.conj(next_phase) * W
                realizations = np.fft.irfftn(shifted, s=grid.n, axes=axes)
                total[outputs[j + 1]] = np.sum(realizations, axis=0)
                squares[outputs[j + 1]] = np.sum(realizations**2, axis=0)
        return total, squares

    starts = list(range(0, n_paths, BATCH_PATHS))
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        partials = list(executor.map(run_batch, starts))
    total, squares = np.zeros(grid.shape), np.zeros(grid.shape)
    for part_total, part_squares in partials:
        total += part_total
        squares += part_squares
    mean = total / n_paths
    variance = np.clip((squares - n_paths * mean**2) / (n_paths - 1), 0.0, None)
    log_verbose(cfg, "POISSON", f"averaged {n_paths} shifted solves, epsilon={epsilon}")
    return Field(grid, mean, provenance, np.sqrt(variance / n_paths), sup)


def _active_directions(Qp: TimePSDPath, T: float) -> List[int]:
    times = np.linspace(0.0, T, 129)
    return [k for k in range(Qp.dim) if np.any(direction_sampler(Qp, k)(times))]


def apriori_bound(f: SourceFunction, Qp: TimePSDPath, epsilon: float, T: float):
    """``T^2 N eps^2 max|l|^4 sup|D^4 f| / 12``, or ``None`` without derivative bounds."""
    bounds = f.derivative_bounds(T)
    if bounds is None:
        return None
    lmax = _max_direction(Qp, range(Qp.dim), T)
    return float(T**2 * Qp.dim * epsilon**2 * lmax**4 * bounds[4] / 12.0)


# pylint: disable=too-many-arguments,too-many-locals
def perturbed_solve_iterative(
    Q: TimePSDPath,
    Qp: TimePSDPath,
    f: SourceFunction,
    grid: SpaceTimeGrid,
    eps_ladder: Sequence[float],
    mode: str = "simultaneous",
    cfg: Optional[SolverConfig] = None,
    atol: float = 1e-12,
) -> Tuple[Field, List[ConvergenceRow]]:
    """Approach ``w = PDE(Q + Q', f)`` by central difference solves along an epsilon ladder.

    In ``simultaneous`` mode the difference terms of all directions are kept at once. In
    ``sequential`` mode the directions are passed to the limit one at a time: the ones already
    passed enter the diffusion exactly and only the last active direction keeps its difference
    term. All ladder entries share the split schedule of the smallest epsilon, so that ``Q' = 0``
    reproduces the direct solve exactly.

    Returns:
        Tuple[Field, List[ConvergenceRow]]: the smallest-epsilon field and one row per epsilon
        with the sup and L2 errors against the direct Gaussian solve.

    Warns:
        NonmonotoneConvergence: if the sup error does not decrease along the ladder.
    """
    cfg = cfg or SolverConfig()
    if mode not in LADDER_MODES:
        raise ValueError(f"Unknown ladder mode '{mode}', expected one of {LADDER_MODES}")
    ladder = [float(e) for e in eps_ladder]
    if not ladder or ladder[-1] <= 0 or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError(f"The epsilon ladder must be positive and decreasing, got {ladder}")
    finest = fd_substeps(grid, ladder[-1], cfg)
    direct_cfg = deepcopy(cfg)
    direct_cfg.method, direct_cfg.substeps = "spectral", finest
    direct = solve_driftless(SumPath([Q, Qp]), f, grid, direct_cfg)

    active = _active_directions(Qp, grid.T)
    if mode == "sequential" and len(active) > 1:
        diffusion = SumPath([Q] + [DirectionalPath(Qp, j) for j in active[:-1]])
        directions = active[-1:]
    else:
        diffusion, directions = Q, active or [0]

    def run(epsilon: float) -> Tuple[Field, ConvergenceRow]:
        start = time.perf_counter()
        field = _fd_solve(diffusion, Qp, epsilon, directions, f, grid, cfg, True, finest)
        diff = field - direct
        row = ConvergenceRow(
            epsilon,
            diff.sup(),
            lp_norm(diff, 2.0),
            apriori_bound(f, Qp, epsilon, grid.T),
            time.perf_counter() - start,
        )
        log_verbose(cfg, "POISSON", f"ladder epsilon={epsilon}: sup error {row.sup_error:.3e}")
        return field, row

    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        results = list(executor.map(run, ladder))
    rows = [row for _, row in results]
    errors = [row.sup_error for row in rows]
    if not all(b < a or (a <= atol and b <= atol) for a, b in zip(errors, errors[1:])):
        warnings.warn(
            NonmonotoneConvergence(f"Sup errors {errors} do not decrease along {ladder}"),
            stacklevel=2,
        )
    field = results[-1][0]
    field.provenance["mode"] = mode
    return field, rows
