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
"""Gaussian solvers for the driftless problem ``PDE(Q, f)`` and for Ornstein-Uhlenbeck problems.

Both problems are solved through their representation formulas

    v(t, z) = int_0^t E[f(s, z + I_{s,t})] ds,   I_{s,t} ~ N(0, 2 int_s^t Q(r) dr),
    u(t, z) = int_0^t E[f(s, e^{(t-s)A} z + I^{ou}_{s,t})] ds,

with a composite trapezoid rule in time and one of three spatial averaging engines: tensor
Gauss-Hermite quadrature in whitened coordinates, antithetic Monte Carlo, or the exact Fourier
multiplier of the increment law on the periodic grid (driftless problems only; OU problems reach
it through drift removal).
"""

import itertools
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import cumulative_trapezoid, quad_vec
from scipy.ndimage import map_coordinates

from hypou.grid import (
    Field,
    SpaceTimeGrid,
    hessian_entry,
    inner_values,
    quadratic_symbol,
    wavenumbers,
)
from hypou.linalg import TOL_PSD, matrix_exp, psd_factor, psd_project, symmetrize
from hypou.options import SolverConfig, log_verbose, path_seed
from hypou.paths import ConjugatedPath, ConstantPath, SumPath, TimePSDPath, zero_path
from hypou.sources import SourceFunction
from hypou.structure import OUSystem, extract_block_structure, scale_matrix
from hypou.utils.exceptions import (
    CoverageError,
    DimensionError,
    MonteCarloBudgetError,
    QuadratureError,
    SingularCovariance,
)

CONDITION_LIMIT = 1e12
COVERAGE_STDS = 4.0
MC_CHUNK = 256


@dataclass
class GaussianIncrementLaw:
    """Law ``N(mean, covariance)`` of a Gaussian increment.

    Fields:
        mean: mean shift
        covariance: symmetric non-negative covariance
        factor: principal factor ``F`` (N x r) with ``F F^T = covariance``
    """

    mean: np.ndarray
    covariance: np.ndarray
    factor: np.ndarray

    @classmethod
    def from_covariance(cls, covariance, mean=None) -> "GaussianIncrementLaw":
        """Build the law from its covariance; the covariance is clamped onto the PSD cone."""
        covariance = psd_project(covariance, TOL_PSD)
        mean = np.zeros(covariance.shape[0]) if mean is None else np.asarray(mean, dtype=float)
        return cls(mean, covariance, psd_factor(covariance))

    @property
    def rank(self) -> int:
        """Number of retained whitened directions."""
        return self.factor.shape[1]

    def sample(self, xi) -> np.ndarray:
        """Map standard normal draws of shape ``(..., rank)`` to draws of the law."""
        return self.mean + np.asarray(xi, dtype=float) @ self.factor.T


def covariance_integral(A, Q: TimePSDPath, s: float, t: float, cfg: SolverConfig) -> np.ndarray:
    """``2 int_s^t e^{(r-s)A} Q(r) e^{(r-s)A*} dr`` by adaptive vector quadrature."""
    if s < 0 or t < s:
        raise ValueError(f"Expected 0 <= s <= t, got s={s}, t={t}")
    N = Q.dim
    if t == s:
        return np.zeros((N, N))
    drift = np.any(A)
    if not drift and isinstance(Q, ConstantPath):
        return 2.0 * (t - s) * Q.matrix

    def integrand(r):
        M = Q.evaluate(r)
        if drift:
            E = matrix_exp(A, r - s)
            M = E @ M @ E.T
        return M

    points = Q.kinks(s, t) or None
    result, _, info = quad_vec(
        integrand,
        s,
        t,
        epsabs=cfg.quad_epsabs,
        epsrel=cfg.quad_epsrel,
        points=points,
        full_output=True,
    )
    if info.status != 0:
        raise QuadratureError(
            f"Covariance integral over [{s}, {t}] did not converge: {info.message}"
        )
    return symmetrize(2.0 * result)


def increment_covariance(
    Q: TimePSDPath, s: float, t: float, cfg: Optional[SolverConfig] = None
) -> GaussianIncrementLaw:
    """Law of ``I_{s,t} = sqrt(2) int_s^t Q(r)^{1/2} dW_r``, i.e. covariance ``2 int_s^t Q``.

    Args:
        Q (TimePSDPath): diffusion path.
        s (float): start time, ``0 <= s``.
        t (float): end time, ``s <= t``.
        cfg (Optional[SolverConfig]): quadrature tolerances.

    Raises:
        QuadratureError: if the adaptive quadrature misses its tolerance.
    """
    cfg = cfg or SolverConfig()
    return GaussianIncrementLaw.from_covariance(covariance_integral(0.0, Q, s, t, cfg))


def ou_covariance(
    system: OUSystem,
    s: float,
    t: float,
    perturbation: Optional[TimePSDPath] = None,
    cfg: Optional[SolverConfig] = None,
) -> GaussianIncrementLaw:
    """Law of the OU increment ``I^{ou}_{s,t}``.

    Without perturbation the covariance is ``2 int_0^{t-s} e^{rA} B e^{rA*} dr``; with a
    perturbation ``S`` it is ``2 int_s^t e^{(r-s)A} (B + S(r)) e^{(r-s)A*} dr``, the increment
    law of the backward representation of the perturbed problem.
    """
    cfg = cfg or SolverConfig()
    if s < 0 or t < s:
        raise ValueError(f"Expected 0 <= s <= t, got s={s}, t={t}")
    if perturbation is None:
        cov = covariance_integral(system.A, ConstantPath(system.B), 0.0, t - s, cfg)
        return GaussianIncrementLaw.from_covariance(cov)
    _check_dim(perturbation.dim, system.N, "perturbation")
    path = SumPath([ConstantPath(system.B), perturbation])
    return GaussianIncrementLaw.from_covariance(covariance_integral(system.A, path, s, t, cfg))


def _check_dim(found: int, expected: int, what: str) -> None:
    if found != expected:
        raise DimensionError(f"The {what} has dimension {found}, expected {expected}")


def _density_parts(system: OUSystem, v: float, cfg: Optional[SolverConfig]):
    if v <= 0:
        raise ValueError(f"Density time must be positive, got {v}")
    cov = ou_covariance(system, 0.0, v, cfg=cfg).covariance
    cond = np.linalg.cond(cov)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularCovariance(f"Covariance at v={v} has condition number {cond:.3e}")
    precision = np.linalg.inv(cov)
    norm = (2.0 * np.pi) ** (-0.5 * system.N) / np.sqrt(np.linalg.det(cov))
    return matrix_exp(system.A, v), precision, norm


def ou_density(system: OUSystem, v: float, z, zp, cfg: Optional[SolverConfig] = None):
    """Transition density ``p(v, z, z')`` of the OU process, vectorized over leading axes.

    Raises:
        SingularCovariance: if the covariance at ``v`` is numerically singular.
    """
    E, precision, norm = _density_parts(system, v, cfg)
    z, zp = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(zp, dtype=float))
    _check_dim(z.shape[-1], system.N, "point")
    diff = zp - z @ E.T
    quad = np.einsum("...i,ij,...j->...", diff, precision, diff)
    out = norm * np.exp(-0.5 * quad)
    return out if out.ndim else float(out)


def ou_density_hessian_x(system: OUSystem, v: float, z, zp, cfg: Optional[SolverConfig] = None):
    """Hessian of ``z -> p(v, z, z')`` restricted to the non-degenerate block ``x``.

    Returns an array of shape ``batch + (d0, d0)``.
    """
    E, precision, norm = _density_parts(system, v, cfg)
    z, zp = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(zp, dtype=float))
    _check_dim(z.shape[-1], system.N, "point")
    E, precision = jnp.asarray(E), jnp.asarray(precision)

    def density(a, b):
        d = b - E @ a
        return norm * jnp.exp(-0.5 * d @ precision @ d)

    batch = z.shape[:-1]
    flat_z = jnp.asarray(z.reshape(-1, system.N))
    flat_zp = jnp.asarray(zp.reshape(-1, system.N))
    hess = jax.vmap(jax.hessian(density, argnums=0))(flat_z, flat_zp)
    d0 = system.d0
    return np.asarray(hess[:, :d0, :d0]).reshape(batch + (d0, d0))


def density_envelope_constant(
    system: OUSystem, vs: Sequence[float], zs, zps, cfg: Optional[SolverConfig] = None
) -> float:
    """Smallest ``C >= 1`` (on a geometric grid) with, for all sampled ``(v, z, z')``,

        |D_x^2 p(v, z, z')| <= C v^{-Q} exp(-|T_v^{-1}(e^{vA} z - z')|^2 v / C),

    where ``Q = sum_i d_i (i + 1/2) + 1``.

    Raises:
        ValueError: if no constant up to ``1e8`` works.
    """
    bs = extract_block_structure(system)
    exponent = sum(size * (i + 0.5) for i, size in enumerate(bs.sizes)) + 1.0
    zs = np.asarray(zs, dtype=float).reshape(-1, system.N)
    zps = np.asarray(zps, dtype=float).reshape(-1, system.N)
    Z = np.repeat(zs, len(zps), axis=0)
    ZP = np.tile(zps, (len(zs), 1))
    scaled, spreads = [], []
    for v in vs:
        hess = ou_density_hessian_x(system, v, Z, ZP, cfg)
        magnitude = np.linalg.norm(hess.reshape(len(Z), -1), axis=1)
        Tinv = np.linalg.inv(scale_matrix(v, bs))
        d = (Z @ matrix_exp(system.A, v).T - ZP) @ Tinv.T
        scaled.append(magnitude * v**exponent)
        spreads.append(v * np.sum(d**2, axis=1))
    scaled, spreads = np.concatenate(scaled), np.concatenate(spreads)
    for C in np.geomspace(1.0, 1e8, 801):
        if np.all(scaled <= C * np.exp(-spreads / C)):
            return float(C)
    raise ValueError("No envelope constant up to 1e8 fits the sampled lattice")


@dataclass
class TimeSchedule:
    """Internal time nodes of a solve.

    Fields:
        nodes: increasing node times, from 0 to T
        right_times: evaluation time of the right limit of the source at each node
        left_times: evaluation time of the left limit of the source at each node
        breaks: whether the source may jump at the node
        outputs: node index of every output time of the grid
    """

    nodes: np.ndarray
    right_times: np.ndarray
    left_times: np.ndarray
    breaks: np.ndarray
    outputs: np.ndarray

    @property
    def steps(self) -> np.ndarray:
        """Interval lengths."""
        return np.diff(self.nodes)


def time_schedule(grid: SpaceTimeGrid, breakpoints: Sequence[float], substeps: int) -> TimeSchedule:
    """Cut every output slice into ``substeps`` sub-slices and insert the source breakpoints."""
    times, T = grid.times, grid.T
    pieces = [np.linspace(times[m], times[m + 1], substeps + 1)[:-1] for m in range(grid.nt)]
    nodes = np.concatenate(pieces + [np.array([T])])
    tol = 1e-12 * T
    inside = sorted(float(b) for b in breakpoints if 0.0 < b < T)
    extra = [b for b in inside if np.min(np.abs(nodes - b)) > tol]
    nodes = np.unique(np.concatenate([nodes, extra]))

    right, left = nodes.copy(), nodes.copy()
    breaks = np.zeros(len(nodes), dtype=bool)
    for b in inside:
        j = int(np.argmin(np.abs(nodes - b)))
        breaks[j] = True
        right[j] = max(nodes[j], b)
        left[j] = np.nextafter(min(nodes[j], b), -np.inf)
    outputs = np.array([int(np.argmin(np.abs(nodes - t))) for t in times])
    return TimeSchedule(nodes, right, left, breaks, outputs)


def _node_weights(schedule: TimeSchedule, J: int) -> List[Tuple[int, float, float]]:
    """Trapezoid weights up to node ``J`` as ``(node, evaluation time, weight)`` triples."""
    steps = schedule.steps
    terms = []
    for j in range(J + 1):
        w_right = 0.5 * steps[j] if j < J else 0.0
        w_left = 0.5 * steps[j - 1] if j > 0 else 0.0
        if schedule.breaks[j]:
            if w_right:
                terms.append((j, schedule.right_times[j], w_right))
            if w_left:
                terms.append((j, schedule.left_times[j], w_left))
        elif w_right + w_left:
            terms.append((j, schedule.nodes[j], w_right + w_left))
    return terms


def _gauss_hermite(n: int, r: int) -> Tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule for ``E[g(xi)]``, ``xi ~ N(0, I_r)``."""
    x, w = hermgauss(n)
    x, w = np.sqrt(2.0) * x, w / np.sqrt(np.pi)
    nodes = np.array(list(itertools.product(x, repeat=r))).reshape(-1, r)
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=r)])
    return nodes, weights


def _antithetic_normals(seed: int, pairs: int, N: int) -> np.ndarray:
    rows = [np.random.default_rng(path_seed(seed, p)).standard_normal(N) for p in range(pairs)]
    return np.stack(rows)


def _gaussian_average(
    f: SourceFunction, tau: float, means: np.ndarray, factor: np.ndarray, method, cfg, normals
):
    """``E[f(tau, m + F xi)]`` for every row ``m`` of ``means``.

    Quadrature returns shape ``(G,)``; Monte Carlo returns the pair averages ``(pairs, G)``.
    """
    r = factor.shape[1]
    if method == "quadrature":
        if r == 0:
            return f.evaluate(tau, means)
        nodes, weights = _gauss_hermite(cfg.n_nodes, r)
        offsets = nodes @ factor.T
        values = f.evaluate(tau, means[:, None, :] + offsets[None, :, :])
        return values @ weights
    if r == 0:
        return np.broadcast_to(f.evaluate(tau, means), (len(normals), len(means)))
    out = np.empty((len(normals), len(means)))
    for start in range(0, len(normals), MC_CHUNK):
        Y = normals[start : start + MC_CHUNK, :r] @ factor.T
        plus = f.evaluate(tau, means[None, :, :] + Y[:, None, :])
        minus = f.evaluate(tau, means[None, :, :] - Y[:, None, :])
        out[start : start + MC_CHUNK] = 0.5 * (plus + minus)
    return out


# pylint: disable=too-many-arguments,too-many-locals
def _direct_engine(A, Q: TimePSDPath, f, grid: SpaceTimeGrid, cfg, seed, method):
    """Representation formula by quadrature or Monte Carlo; works for any drift."""
    schedule = time_schedule(grid, f.time_breakpoints, cfg.substeps)
    nodes, steps = schedule.nodes, schedule.steps
    increments = [
        covariance_integral(A, Q, a, b, cfg) for a, b in zip(nodes[:-1], nodes[1:])
    ]
    flows = [matrix_exp(A, dt) for dt in steps]

    normals = None
    if method == "montecarlo":
        if cfg.even_paths > cfg.max_paths:
            raise MonteCarloBudgetError(
                f"{cfg.even_paths} paths requested, the budget is {cfg.max_paths}"
            )
        normals = _antithetic_normals(seed, cfg.even_paths // 2, grid.dim)

    pts = grid.points().reshape(-1, grid.dim)
    values = np.zeros((grid.nt + 1, len(pts)))
    std_error = np.zeros_like(values) if normals is not None else None
    for m in range(1, grid.nt + 1):
        J = int(schedule.outputs[m])
        t = nodes[J]
        covs = [None] * (J + 1)
        covs[J] = np.zeros((grid.dim, grid.dim))
        for j in range(J - 1, -1, -1):
            covs[j] = increments[j] + flows[j] @ covs[j + 1] @ flows[j].T
        acc = 0.0
        for j, tau, weight in _node_weights(schedule, J):
            means = pts @ matrix_exp(A, t - nodes[j]).T
            acc = acc + weight * _gaussian_average(
                f, tau, means, psd_factor(covs[j]), method, cfg, normals
            )
        if normals is None:
            values[m] = acc
        else:
            values[m] = np.mean(acc, axis=0)
            std_error[m] = np.std(acc, axis=0, ddof=1) / np.sqrt(len(acc))
        log_verbose(cfg, "SOLVE", f"slice {m}/{grid.nt} done ({method}, {J} nodes)")
    shape = grid.shape
    return values.reshape(shape), None if std_error is None else std_error.reshape(shape)


def source_transform(f: SourceFunction, pts: np.ndarray) -> Callable[[float], np.ndarray]:
    """``tau -> rfftn(f(tau, pts))``."""
    return lambda tau: np.fft.rfftn(f.evaluate(tau, pts))


def diffusion_multipliers(Q: TimePSDPath, schedule: TimeSchedule, ks, cfg) -> List[np.ndarray]:
    """Fourier multipliers ``exp(-k^T (int Q) k)`` of the increment laws over every interval."""
    nodes = schedule.nodes
    return [
        np.exp(-0.5 * quadratic_symbol(ks, covariance_integral(0.0, Q, a, b, cfg)))
        for a, b in zip(nodes[:-1], nodes[1:])
    ]


def spectral_march(
    grid: SpaceTimeGrid,
    schedule: TimeSchedule,
    multipliers: Sequence[np.ndarray],
    source_hat: Callable[[float], np.ndarray],
    cfg: Optional[SolverConfig] = None,
) -> np.ndarray:
    """Trapezoid accumulation of the representation formula in Fourier space.

    With ``W_j`` the transformed partial integral up to node ``j``,
    ``W_{j+1} = M_j (W_j + dt_j/2 f_j^+) + dt_j/2 f_{j+1}^-``; the multipliers ``M_j`` may carry
    any additional bounded generator as long as it is diagonal in Fourier space.
    """
    nodes, steps = schedule.nodes, schedule.steps
    outputs = {int(J): m for m, J in enumerate(schedule.outputs)}
    values = np.zeros(grid.shape)
    right = source_hat(schedule.right_times[0])
    W = np.zeros_like(right)
    for j, dt in enumerate(steps):
        left = source_hat(schedule.left_times[j + 1])
        W = multipliers[j] * (W + 0.5 * dt * right) + 0.5 * dt * left
        if schedule.breaks[j + 1]:
            right = source_hat(schedule.right_times[j + 1])
        else:
            right = left
        if j + 1 in outputs:
            values[outputs[j + 1]] = np.fft.irfftn(W, s=grid.n)
            log_verbose(cfg, "SOLVE", f"slice {outputs[j + 1]}/{grid.nt} at t={nodes[j + 1]:.6g}")
    return values


def _spectral_engine(Q: TimePSDPath, f: SourceFunction, grid: SpaceTimeGrid, cfg) -> np.ndarray:
    schedule = time_schedule(grid, f.time_breakpoints, cfg.substeps)
    multipliers = diffusion_multipliers(Q, schedule, wavenumbers(grid), cfg)
    return spectral_march(grid, schedule, multipliers, source_transform(f, grid.points()), cfg)


def coverage_radius(f: SourceFunction, terminal_cov, extra: float = 0.0) -> float:
    """Radius ``R + extra + 4 sqrt(lambda_max)`` a box has to contain."""
    lam = float(np.max(np.linalg.eigvalsh(symmetrize(terminal_cov)), initial=0.0))
    return f.support_radius + extra + COVERAGE_STDS * np.sqrt(max(lam, 0.0))


def check_coverage(grid: SpaceTimeGrid, f: SourceFunction, terminal_cov, extra=0.0) -> None:
    """Raise ``CoverageError`` unless the grid box contains the coverage ball.

    Sources with unbounded support are not checked.
    """
    if not np.isfinite(f.support_radius):
        return
    radius = coverage_radius(f, terminal_cov, extra)
    if not grid.covers_ball(radius):
        raise CoverageError(f"Grid box {grid.box} does not contain the ball of radius {radius:.4g}")


def _source_sup(f: SourceFunction, T: float) -> Optional[float]:
    try:
        return float(f.sup_bound(T))
    except (ValueError, NotImplementedError):
        return None


def _provenance(solver: str, method: str, cfg: SolverConfig, seed) -> dict:
    return {
        "solver": solver,
        **cfg.descriptor(),
        "method": method,
        "seed": int(seed) if method == "montecarlo" else None,
    }


def solve_driftless(
    Q: TimePSDPath,
    f: SourceFunction,
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    seed: int = 0,
) -> Field:
    """Solve ``v_t = Tr(Q(t) D^2 v) + f``, ``v(0) = 0`` on the grid.

    Args:
        Q (TimePSDPath): diffusion path.
        f (SourceFunction): source.
        grid (SpaceTimeGrid): output grid.
        cfg (Optional[SolverConfig]): solver options.
        seed (int): master seed of the Monte Carlo engine.

    Returns:
        Field: ``v = PDE(Q, f)``; Monte Carlo solves carry per-node standard errors.

    Raises:
        CoverageError: if the grid box is too small for the source and the diffusion.
        QuadratureError: if a covariance integral misses its tolerance.
    """
    cfg = cfg or SolverConfig()
    _check_dim(Q.dim, grid.dim, "diffusion path")
    _check_dim(f.dim, grid.dim, "source")
    method = cfg.resolved_method(grid.dim)
    check_coverage(grid, f, covariance_integral(0.0, Q, 0.0, grid.T, cfg))
    log_verbose(cfg, "SOLVE", f"driftless solve, method={method}, grid n={grid.n} nt={grid.nt}")
    std_error = None
    if method == "spectral":
        values = _spectral_engine(Q, f, grid, cfg)
    else:
        values, std_error = _direct_engine(np.zeros((grid.dim,) * 2), Q, f, grid, cfg, seed, method)
    provenance = _provenance("driftless", method, cfg, seed)
    return Field(grid, values, provenance, std_error, _source_sup(f, grid.T))


def driftless_grid(
    A, grid: SpaceTimeGrid, Q: TimePSDPath, f: SourceFunction, cfg: Optional[SolverConfig] = None
) -> SpaceTimeGrid:
    """Grid of the drift-free problem behind an OU solve on ``grid``.

    The box contains every ``e^{tA} z`` for nodes ``z`` of ``grid`` (plus a margin for cubic
    interpolation) and the coverage ball of the drift-free source; the spacing is unchanged.
    """
    cfg = cfg or SolverConfig()
    A = np.asarray(A, dtype=float)
    h = grid.spacing
    corners = np.array(list(itertools.product(*[(a[0], a[-1]) for a in grid.axes()])))
    images = np.concatenate([corners @ matrix_exp(A, t).T for t in grid.times])
    lo = images.min(axis=0) - 3.0 * h
    hi = images.max(axis=0) + 3.0 * h
    if np.isfinite(f.support_radius):
        radius = coverage_radius(f, covariance_integral(0.0, Q, 0.0, grid.T, cfg))
        lo, hi = np.minimum(lo, -radius - h), np.maximum(hi, radius + h)
    n = np.ceil((hi - lo) / h).astype(int)
    n = n + (n % 2)
    box = tuple((float(l), float(l + m * s)) for l, m, s in zip(lo, n, h))
    return SpaceTimeGrid(grid.T, grid.nt, box, tuple(int(m) for m in n), grid.band)


def _remap(field: Field, A, sign: float, target: Optional[SpaceTimeGrid], name: str) -> Field:
    A = np.asarray(A, dtype=float)
    src = field.grid
    target = src if target is None else target
    _check_dim(A.shape[0], src.dim, "drift")
    if target.nt != src.nt or target.T != src.T:
        raise DimensionError("Source and target grids have different time slices")
    if not np.any(A) and target == src:
        return Field(src, field.values.copy(), {**field.provenance, "map": name}, field.std_error)
    pts = target.points()
    values = np.zeros(target.shape)
    upper = np.array(src.n, dtype=float) - 1.0
    for m, t in enumerate(target.times):
        idx = src.fractional_index(pts @ matrix_exp(A, sign * t).T)
        flat = idx.reshape(src.dim, -1)
        if np.any(flat < -1e-9) or np.any(flat > upper[:, None] + 1e-9):
            raise CoverageError(f"{name}: mapped nodes leave the sampled region at t={t:.6g}")
        values[m] = map_coordinates(field.values[m], idx, order=3, mode="nearest")
    return Field(target, values, {**field.provenance, "map": name}, None, field.source_sup)


def pull_to_driftless(u: Field, A, grid: Optional[SpaceTimeGrid] = None) -> Field:
    """``v(t, z) = u(t, e^{-tA} z)`` by cubic interpolation, sampled on ``grid``.

    Raises:
        CoverageError: if ``e^{-tA} z`` leaves the region sampled by ``u``.
    """
    return _remap(u, A, -1.0, grid, "pull")


def push_to_ou(v: Field, A, grid: Optional[SpaceTimeGrid] = None) -> Field:
    """``u(t, z) = v(t, e^{tA} z)`` by cubic interpolation, sampled on ``grid``.

    Raises:
        CoverageError: if ``e^{tA} z`` leaves the region sampled by ``v``.
    """
    return _remap(v, A, 1.0, grid, "push")


def solve_ou(
    system: OUSystem,
    f: SourceFunction,
    grid: SpaceTimeGrid,
    cfg: Optional[SolverConfig] = None,
    seed: int = 0,
    perturbation: Optional[TimePSDPath] = None,
) -> Field:
    """Solve ``u_t = Tr((B + S(t)) D^2 u) + <Az, Du> + f``, ``u(0) = 0``.

    Quadrature and Monte Carlo use the OU representation formula with mean shift
    ``e^{(t-s)A} z``. The spectral method removes the drift: it solves the driftless problem with
    ``Q(t) = e^{tA}(B + S(t))e^{tA*}`` and source ``f(t, e^{-tA} z)`` on :func:`driftless_grid`
    and pushes the result back.

    Args:
        system (OUSystem): the operator.
        f (SourceFunction): source.
        grid (SpaceTimeGrid): output grid.
        cfg (Optional[SolverConfig]): solver options.
        seed (int): master seed of the Monte Carlo engine.
        perturbation (Optional[TimePSDPath]): second-order perturbation ``S``; zero by default.
    """
    cfg = cfg or SolverConfig()
    _check_dim(system.N, grid.dim, "system")
    _check_dim(f.dim, grid.dim, "source")
    S = perturbation if perturbation is not None else zero_path(system.N)
    _check_dim(S.dim, system.N, "perturbation")
    Q = SumPath([ConstantPath(system.B), S])
    A = system.A
    method = cfg.resolved_method(grid.dim)
    check_coverage(grid, f, covariance_integral(A, Q, 0.0, grid.T, cfg))
    log_verbose(cfg, "SOLVE", f"OU solve, method={method}, grid n={grid.n} nt={grid.nt}")

    std_error = None
    if method != "spectral":
        values, std_error = _direct_engine(A, Q, f, grid, cfg, seed, method)
    elif not np.any(A):
        values = _spectral_engine(Q, f, grid, cfg)
    else:
        Qc = ConjugatedPath(A, Q)
        fc = f.pullback(A, grid.T)
        dgrid = driftless_grid(A, grid, Qc, fc, cfg)
        log_verbose(cfg, "SOLVE", f"drift removed, driftless box {dgrid.box} n={dgrid.n}")
        v = Field(dgrid, _spectral_engine(Qc, fc, dgrid, cfg))
        values = push_to_ou(v, A, grid).values
    provenance = _provenance("ou", method, cfg, seed)
    return Field(grid, values, provenance, std_error, _source_sup(f, grid.T))


def residual(field: Field, Q: TimePSDPath, f: SourceFunction) -> float:
    """``max |v(t, z) - int_0^t (f + Tr(Q D^2 v)) ds|`` over the inner nodes.

    Second derivatives are centred differences, the time integral is the trapezoid rule on the
    grid times.
    """
    grid = field.grid
    _check_dim(Q.dim, grid.dim, "diffusion path")
    pts = grid.points()
    integrand = []
    for m, t in enumerate(grid.times):
        Qt = Q.evaluate(t)
        total = inner_values(f.evaluate(t, pts), grid)
        for a in range(grid.dim):
            for b in range(grid.dim):
                if Qt[a, b] != 0.0:
                    total = total + Qt[a, b] * hessian_entry(field.values[m], grid, a, b)
        integrand.append(total)
    integral = cumulative_trapezoid(np.stack(integrand), x=grid.times, axis=0, initial=0.0)
    return float(np.max(np.abs(inner_values(field.values, grid) - integral)))
