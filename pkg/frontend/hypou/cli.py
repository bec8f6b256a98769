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
"""Command-line driver: ``hypou {check,solve,perturb,norms,verify,poisson-demo}``.

Every command reads a JSON run configuration, resolves it (seed, suites, grid) and writes the
resolved document as ``manifest.json`` next to its outputs; feeding the manifest back with
``--config`` repeats the run.
"""

import json
import os
import sys
import time
from argparse import ArgumentParser
from argparse import Namespace as ParsedArguments
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from dataclasses_json import Undefined, dataclass_json
from dataclasses_json.undefined import UndefinedParameterError

from hypou._version import __version__
from hypou.gaussian import solve_ou
from hypou.grid import CSV_FLOAT_FORMAT, Field, SpaceTimeGrid, source_field
from hypou.harness import (
    DEFAULT_LADDER,
    DELTA,
    MODES,
    covering_grid,
    default_perturbation_suite,
    default_source_suite,
    epsilon_convergence_study,
    ladder_solve,
    max_principle_suite,
    norm_pair,
    schauder_stability,
    sobolev_stability,
    solve_perturbed,
    stability_experiment,
)
from hypou.norms import holder_norm, sobolev_seminorm
from hypou.options import SolverConfig, derived_int_seed, log_verbose
from hypou.paths import ConstantPath, TimePSDPath, path_from_dict, zero_path
from hypou.poisson import (
    expectation_identity_check,
    integral_expectation_check,
    interarrival_ks,
    rate,
    sample_poisson_ensemble,
)
from hypou.sources import SourceFunction, source_from_dict
from hypou.structure import OUSystem, extract_block_structure, structure_report
from hypou.utils.exceptions import ConfigError, HypoUError, StructureError

SEED_ENV = "HYPOU_SEED"
SUITES = ("stability", "sobolev", "schauder", "convergence", "max-principle")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_COMPUTE = 3


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class SolverSection:
    """Solver options of a run; see :class:`hypou.options.SolverConfig`."""

    method: str = "spectral"
    n_nodes: int = 9
    n_paths: int = 2000
    max_paths: int = 100000
    substeps: int = 1
    split_dt: Optional[float] = None
    quad_epsabs: float = 1e-12
    quad_epsrel: float = 1e-10


@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class PoissonSection:
    """Parameters of the Poisson fixtures."""

    epsilon: float = 0.2
    t: float = 1.0
    n_paths: int = 100000
    ks_samples: int = 10000


# pylint: disable=too-many-instance-attributes
@dataclass_json(undefined=Undefined.RAISE)
@dataclass
class RunConfig:
    """A run configuration document.

    ``system`` is the only required key. Missing suites default to the built-in ones, a missing
    ``grid`` to a centred box covering every solve of the run.
    """

    system: Dict[str, Any]
    command: Optional[str] = None
    grid: Optional[Dict[str, Any]] = None
    T: float = 1.0
    nt: int = 64
    n: int = 64
    band: int = 2
    sources: Optional[Dict[str, Dict[str, Any]]] = None
    perturbations: Optional[Dict[str, Dict[str, Any]]] = None
    perturbation: Optional[str] = None
    solver: SolverSection = field(default_factory=SolverSection)
    seed: int = 0
    norms: List[str] = field(default_factory=lambda: ["d2x_lp"])
    p: float = 2.0
    beta: float = 0.5
    extension: str = "zero"
    sobolev_component: bool = True
    mode: str = "direct"
    eps_ladder: List[float] = field(default_factory=lambda: list(DEFAULT_LADDER))
    ladder_mode: str = "simultaneous"
    delta: float = DELTA
    poisson: PoissonSection = field(default_factory=PoissonSection)


@dataclass
class Run:
    """A resolved configuration: built objects next to the document they came from."""

    config: RunConfig
    system: OUSystem
    sources: Dict[str, SourceFunction]
    perturbations: Dict[str, TimePSDPath]
    grid: SpaceTimeGrid
    cfg: SolverConfig
    out: str
    timings: Dict[str, float] = field(default_factory=dict)


def load_config(path: str) -> RunConfig:
    """Parse and schema-check a configuration file.

    A bare system descriptor (a document with an ``A`` key) is accepted as ``{"system": doc}``.

    Raises:
        ConfigError: on malformed JSON (reported as ``path:line:col``) or schema violations.
    """
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    if isinstance(doc, dict) and "A" in doc:
        doc = {"system": doc}
    if not isinstance(doc, dict) or "system" not in doc:
        raise ConfigError(f"{path}: the configuration needs a 'system' entry")
    try:
        # pylint: disable=no-member
        return RunConfig.from_dict(doc)
    except (UndefinedParameterError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e


def resolve_seed(flag: Optional[int], config_seed: int) -> int:
    """``--seed`` beats ``HYPOU_SEED`` beats the configuration."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from e
    return int(config_seed)


def _resolve_sources(config: RunConfig, dim: int) -> Dict[str, SourceFunction]:
    docs = config.sources
    if docs is None:
        docs = {name: f.to_dict() for name, f in default_source_suite(dim).items()}
    if not docs:
        raise ConfigError("The source suite is empty")
    config.sources = docs
    return {name: source_from_dict(doc, dim) for name, doc in docs.items()}


def _resolve_perturbations(config: RunConfig, dim: int, T: float) -> Dict[str, TimePSDPath]:
    docs = config.perturbations
    if docs is None:
        docs = {name: S.to_dict() for name, S in default_perturbation_suite(dim, T).items()}
    config.perturbations = docs
    paths = {name: path_from_dict(doc) for name, doc in docs.items()}
    for name, S in paths.items():
        if S.dim != dim:
            raise ConfigError(f"Perturbation '{name}' has size {S.dim}, expected {dim}")
    return paths


def resolve(config: RunConfig, a: ParsedArguments, command: str) -> Run:
    """Build the objects of a run and fill every defaulted entry of its document."""
    config.command = command
    config.seed = resolve_seed(a.seed, config.seed)
    try:
        system = OUSystem.from_dict(config.system, permissive=a.permissive)
        sources = _resolve_sources(config, system.N)
        perturbations = _resolve_perturbations(config, system.N, config.T)
        if config.perturbation is not None and config.perturbation not in perturbations:
            raise ConfigError(f"Unknown perturbation '{config.perturbation}'")
        if config.mode not in MODES:
            raise ConfigError(f"Unknown mode '{config.mode}', expected one of {MODES}")
        # pylint: disable=no-member
        solver = config.solver.to_dict()
        cfg = SolverConfig(verbose=a.verbose, workers=a.workers, **solver)
    except (ValueError, TypeError, StructureError) as e:
        raise ConfigError(str(e)) from e
    if config.grid is None:
        # covers the whole perturbation suite whatever the command
        grid = covering_grid(
            system,
            list(sources.values()),
            list(perturbations.values()),
            config.T,
            config.nt,
            config.n,
            config.band,
            cfg,
        )
        config.grid = grid.to_dict()
    try:
        grid = SpaceTimeGrid.from_dict(config.grid)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Malformed grid descriptor: {e}") from e
    return Run(config, system, sources, perturbations, grid, cfg, a.out)


def _perturbation(run: Run) -> TimePSDPath:
    name = run.config.perturbation
    return zero_path(run.system.N) if name is None else run.perturbations[name]


def _write_json(run: Run, name: str, doc: Any) -> None:
    with open(os.path.join(run.out, name), "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=4)


def _write_frame(run: Run, name: str, frame: pd.DataFrame, index: bool = False) -> None:
    frame.to_csv(os.path.join(run.out, name), index=index, float_format=CSV_FLOAT_FORMAT)


def _finish(run: Run) -> None:
    # pylint: disable=no-member
    _write_json(run, "manifest.json", run.config.to_dict())
    _write_json(run, "timings.json", run.timings)


def _timed(run: Run, label: str, fn, *args, **kwargs):
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    run.timings[label] = time.perf_counter() - start
    return result


def cmd_check(config: RunConfig, a: ParsedArguments) -> int:
    """Hypoellipticity verdict and block structure of the configured system."""
    try:
        system = OUSystem.from_dict(config.system, permissive=True)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e
    report = structure_report(system)
    # pylint: disable=no-member
    print(json.dumps(report.to_dict(), indent=4))
    if a.out is not None:
        os.makedirs(a.out, exist_ok=True)
        with open(os.path.join(a.out, "structure.json"), "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=4)
    return EXIT_OK if report.hypoelliptic or a.permissive else EXIT_FAILED


def _solve_sources(run: Run, S: Optional[TimePSDPath], mode: str):
    fields, rows = {}, []
    for j, (name, f) in enumerate(run.sources.items()):
        if mode == "poisson-ladder":
            S_eff = S if S is not None else zero_path(run.system.N)
            u, ladder = _timed(
                run,
                name,
                ladder_solve,
                run.system,
                f,
                S_eff,
                run.grid,
                run.config.eps_ladder,
                run.cfg,
                run.config.ladder_mode,
            )
            rows += [{"source": name, **r.to_dict(), "runtime_s": r.runtime_s} for r in ladder]
        elif S is None:
            seed = derived_int_seed(run.config.seed, j)
            u = _timed(run, name, solve_ou, run.system, f, run.grid, run.cfg, seed)
        else:
            seed = derived_int_seed(run.config.seed, j)
            u = _timed(run, name, solve_perturbed, run.system, f, S, run.grid, run.cfg, seed)
        if u.source_sup is None:
            u.source_sup = float(f.sup_bound(run.grid.T))
        fields[name] = u
    return fields, rows


def _write_fields(run: Run, fields: Dict[str, Field]) -> None:
    for name, u in fields.items():
        u.write_csv(os.path.join(run.out, f"field_{name}.csv"))
        log_verbose(run.cfg, "CLI", f"wrote field_{name}.csv")


def cmd_solve(run: Run) -> int:
    """Unperturbed OU solve of every source, one field table per source."""
    fields, _ = _solve_sources(run, None, "direct")
    _write_fields(run, fields)
    return EXIT_OK


def cmd_perturb(run: Run) -> int:
    """Perturbed solve of every source with the configured perturbation (zero by default)."""
    fields, rows = _solve_sources(run, _perturbation(run), run.config.mode)
    _write_fields(run, fields)
    if rows:
        _write_frame(run, "convergence.csv", pd.DataFrame(rows))
    return EXIT_OK


def cmd_norms(run: Run) -> int:
    """Norm reports of the unperturbed solutions and their norm-pair ratios."""
    bs = extract_block_structure(run.system)
    c = run.config
    pairs = [norm_pair(name, run.system, c.p, c.beta, c.extension) for name in c.norms]
    fields, _ = _solve_sources(run, None, "direct")
    doc = {}
    for name, u in fields.items():
        f_field = source_field(run.sources[name], run.grid)
        sobolev = sobolev_seminorm(u, bs, c.p, extension=c.extension)
        holder = holder_norm(u.values[-1], 2.0 + c.beta, bs, run.grid)
        # pylint: disable=no-member
        doc[name] = {
            "sobolev": sobolev.to_dict(),
            "holder_terminal": holder.to_dict(),
            "ratios": {pair.name: pair.ratio(u, f_field) for pair in pairs},
        }
    _write_json(run, "norms.json", doc)
    return EXIT_OK


def _stability_suite(run: Run, suite: str):
    c = run.config
    common = {"mode": c.mode, "seed": c.seed, "delta": c.delta, "eps_ladder": c.eps_ladder}
    args = (run.perturbations, run.sources)
    if suite == "sobolev":
        return sobolev_stability(
            run.system, *args, run.grid, run.cfg, c.p, c.sobolev_component, **common
        )
    if suite == "schauder":
        return schauder_stability(run.system, c.beta, *args, run.grid, run.cfg, **common)
    pair = norm_pair(c.norms[0], run.system, c.p, c.beta, c.extension)
    return stability_experiment(run.system, *args, pair, run.grid, run.cfg, **common)


def _verify_one(run: Run, suite: str) -> bool:
    # pylint: disable=no-member
    start = time.perf_counter()
    if suite in ("stability", "sobolev", "schauder"):
        report = _stability_suite(run, suite)
        frame = pd.DataFrame(report.ratios, index=report.sources, columns=report.perturbations)
        frame.index.name = "source"
        _write_frame(run, f"{suite}_ratios.csv", frame, index=True)
        _write_json(run, f"{suite}_report.json", report.to_dict())
        run.timings.update({f"{suite}/{k}": v for k, v in report.runtimes.items()})
        passed = report.passed
        log_verbose(run.cfg, "CLI", f"{suite}: margin {report.margin:.6g}")
    elif suite == "convergence":
        S = run.perturbations[run.config.perturbation] if run.config.perturbation else None
        if S is None:
            M = np.zeros((run.system.N, run.system.N))
            M[-1, -1] = 1.0
            S = ConstantPath(M)
        name, f = next(iter(run.sources.items()))
        study = epsilon_convergence_study(
            run.system, S, f, run.grid, run.config.eps_ladder, run.cfg, run.config.ladder_mode
        )
        rows = [{"source": name, **r.to_dict(), "runtime_s": r.runtime_s} for r in study.rows]
        frame = pd.DataFrame(rows)
        _write_frame(run, "convergence.csv", frame)
        _write_json(run, "convergence_report.json", study.to_dict())
        passed = study.monotone
    elif suite == "max-principle":
        fields, _ = _solve_sources(run, None, "direct")
        rows = max_principle_suite(fields)
        _write_frame(run, "max_principle.csv", pd.DataFrame([r.to_dict() for r in rows]))
        passed = all(r.passed for r in rows)
        doc = {"rows": [r.to_dict() for r in rows], "passed": passed}
        _write_json(run, "max_principle_report.json", doc)
    else:
        raise ConfigError(f"Unknown suite '{suite}', expected one of {SUITES} or 'all'")
    run.timings[suite] = time.perf_counter() - start
    return passed


def cmd_verify(run: Run, suite: str) -> int:
    """Run one verification suite (or all of them); exit 1 when any of them fails."""
    suites = SUITES if suite == "all" else (suite,)
    results = [_verify_one(run, s) for s in suites]
    return EXIT_OK if all(results) else EXIT_FAILED


def cmd_poisson_demo(run: Run) -> int:
    """Statistical fixtures of the jump process behind the perturbation scheme."""
    c = run.config.poisson
    lam = rate(c.epsilon)
    seed = run.config.seed

    def integrand(s):
        return 1.0 + 0.5 * np.sin(2.0 * np.pi * s)

    def adapted(path, times):
        return np.cos(path.count(times))

    integral = integral_expectation_check(integrand, lam, c.t, c.n_paths, seed, "compensator")
    paths = sample_poisson_ensemble(lam, c.t, c.n_paths, derived_int_seed(seed, 1))
    identity = expectation_identity_check(adapted, paths, c.t, "left-limit integral")
    ks = interarrival_ks(lam, c.ks_samples, derived_int_seed(seed, 2))
    # pylint: disable=no-member
    doc = {
        "lambda": lam,
        "integral": integral.to_dict(),
        "identity": identity.to_dict(),
        "ks": ks.to_dict(),
    }
    _write_json(run, "poisson_report.json", doc)
    for report in (integral, identity):
        log_verbose(run.cfg, "CLI", f"{report.name}: z={report.z_score:.3f}")
    return EXIT_OK if integral.passed and identity.passed and ks.passed else EXIT_FAILED


def build_parser() -> ArgumentParser:
    """The argument parser of the ``hypou`` command."""
    # fmt: off
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, required=True, metavar="FILE.json",
                        help="Run configuration (JSON)")
    common.add_argument("--out", type=str, default=None, metavar="DIR",
                        help="Output directory (default - 'hypou-out'; 'check' prints only)")
    common.add_argument("--seed", type=int, default=None, metavar="INT",
                        help=f"Master seed, overrides ${SEED_ENV} and the configuration")
    common.add_argument("--workers", type=int, default=1, metavar="INT",
                        help="Parallelism cap; results do not depend on it (default - 1)")
    common.add_argument("--permissive", default=False, action="store_true",
                        help="Accept systems violating the Kalman condition")
    common.add_argument("-v", "--verbose", default=False, action="store_true",
                        help="Print tagged progress lines to stderr")

    epilog = ("Exit codes: 0 - success, 1 - verdict false, margin exceeded or fixture failed, "
              "2 - configuration error, 3 - computational error")
    ap = ArgumentParser(prog="hypou", epilog=epilog,
                        description="Hypoelliptic OU solvers and perturbation experiments")
    ap.add_argument("--version", action="version", version=f"hypou {__version__}")
    cmds = ap.add_subparsers(help="command help", dest="command", required=True)
    cmds.add_parser("check", parents=[common], epilog=epilog,
                    help="Kalman condition and block structure of the system")
    cmds.add_parser("solve", parents=[common], epilog=epilog,
                    help="Solve the unperturbed problem for every source")
    perturb = cmds.add_parser("perturb", parents=[common], epilog=epilog,
                              help="Solve the perturbed problem for every source")
    perturb.add_argument("--mode", type=str, choices=MODES, default=None,
                         help="Solver route (default - the configuration's, else 'direct')")
    cmds.add_parser("norms", parents=[common], epilog=epilog,
                    help="Anisotropic norm reports of the unperturbed solutions")
    verify = cmds.add_parser("verify", parents=[common], epilog=epilog,
                             help="Run verification suites")
    verify.add_argument("--suite", type=str, choices=SUITES + ("all",), default="stability",
                        help="Suite to run (default - stability)")
    cmds.add_parser("poisson-demo", parents=[common], epilog=epilog,
                    help="Statistical fixtures of the Poisson jump process")
    # fmt: on
    return ap


def _report_error(e: Exception) -> None:
    code = getattr(e, "code", "internal")
    print(json.dumps({"error": code, "message": str(e)}), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the exit code."""
    a = build_parser().parse_args(argv)
    try:
        config = load_config(a.config)
        if a.command == "check":
            return cmd_check(config, a)
        if getattr(a, "mode", None) is not None:
            config.mode = a.mode
        a.out = a.out if a.out is not None else "hypou-out"
        run = resolve(config, a, a.command)
        os.makedirs(run.out, exist_ok=True)
        log_verbose(run.cfg, "CLI", f"{a.command}: grid n={run.grid.n} nt={run.grid.nt}")
        if a.command == "solve":
            code = cmd_solve(run)
        elif a.command == "perturb":
            code = cmd_perturb(run)
        elif a.command == "norms":
            code = cmd_norms(run)
        elif a.command == "verify":
            code = cmd_verify(run, a.suite)
        else:
            code = cmd_poisson_demo(run)
        _finish(run)
        return code
    except ConfigError as e:
        _report_error(e)
        return EXIT_CONFIG
    except HypoUError as e:
        _report_error(e)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
