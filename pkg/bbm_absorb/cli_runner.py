"""Command line front end.

Every run validates its configuration, writes its CSV artifacts write-once
into the output directory and finishes with a JSON manifest, also when it
fails. Exit codes: 0 success, 2 invalid input, 3 numerical failure or failed
check, 4 censoring above the tolerance.
"""
import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence

import numpy as np
import scipy
from pydantic import ValidationError

from . import __version__
from .artifacts import read_csv
from .artifacts import render_csv
from .artifacts import sha256_hex
from .artifacts import write_once
from .asymptotics_lab import fit_constant
from .asymptotics_lab import ratio_diagnostic
from .asymptotics_lab import tail_sum_check
from .asymptotics_lab import two_barrier_mean
from .bbm_simulator import EmpiricalDist
from .bbm_simulator import run_ensemble
from .config import COMMANDS
from .config import RunConfig
from .config import parse_config
from .errors import ModelError
from .errors import NumericalError
from .fkpp_wave import F_from_wave
from .fkpp_wave import a_from_wave
from .fkpp_wave import solve_wave
from .fkpp_wave import wave_residual
from .generator_solver import GeneratorSeries
from .generator_solver import solve_a
from .gw_process import GeneratorEvaluator
from .gw_process import distribution
from .gw_process import evolve_F
from .gw_process import verify_identities
from .manifest import Artifact
from .manifest import Diagnostic
from .manifest import ManifestDecodeError
from .manifest import ManifestReader
from .manifest import ManifestWriter
from .manifest import RunManifest
from .offspring_law import Regime
from .offspring_law import drift_params
from .offspring_law import expected_absorbed

__all__ = [
    "EXIT_OK",
    "EXIT_INVALID",
    "EXIT_NUMERICAL",
    "EXIT_CENSORED",
    "THREADS_ENV",
    "SchemaMismatch",
    "RunResult",
    "ColumnDeviation",
    "CompareReport",
    "load_config",
    "resolve_threads",
    "parse_tolerances",
    "execute",
    "compare",
    "main",
]

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_CENSORED = 4

THREADS_ENV = "BBM_ABSORB_THREADS"
MANIFEST_NAME = "manifest.json"
COMPARE_TOLERANCE = "compare"
DEFAULT_COMPARE_TOLERANCE = 1e-6
CHECK_POINTS = 10


class SchemaMismatch(ModelError):
    pass


class _Checks:
    """Collects diagnostics and the artifacts of one run."""

    def __init__(self, cfg: RunConfig) -> None:
        self.cfg = cfg
        self.directory = Path(cfg.output.directory)
        self.artifacts: List[Artifact] = []
        self.diagnostics: List[Diagnostic] = []

    def note(self, name: str, value: float, threshold: Optional[float] = None) -> None:
        self.diagnostics.append(Diagnostic.of(name, value, threshold))

    def check(self, name: str, value: float, tolerance: str) -> None:
        self.note(name, value, self.cfg.tolerance(tolerance))

    def store(self, name: str, data: bytes) -> Path:
        path = write_once(self.directory / name, data)
        self.artifacts.append(Artifact(name=name, path=str(path), sha256=sha256_hex(data)))
        LOGGER.info("wrote %s", path)
        return path


@dataclass
class RunResult:
    exit_code: int
    manifest: RunManifest
    manifest_path: Optional[Path] = None


@dataclass(frozen=True)
class ColumnDeviation:
    name: str
    max_abs: float
    max_rel: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_abs <= self.tolerance


@dataclass(frozen=True)
class CompareReport:
    path_a: str
    path_b: str
    columns: List[ColumnDeviation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(column.passed for column in self.columns)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "a": self.path_a,
            "b": self.path_b,
            "passed": self.passed,
            "columns": [
                {
                    "name": c.name,
                    "max_abs": c.max_abs,
                    "max_rel": c.max_rel,
                    "tolerance": c.tolerance,
                    "passed": c.passed,
                }
                for c in self.columns
            ],
        }


def load_config(path: Path) -> RunConfig:
    """
    Read a TOML configuration, or the configuration embedded in a manifest.

    :raises ParseError: on malformed TOML
    :raises ManifestDecodeError: on a malformed manifest
    """
    data = Path(path).read_bytes()
    if Path(path).suffix == ".json":
        manifest = ManifestReader.decode(data)
        return RunConfig.model_validate_json(manifest.config)
    return parse_config(data.decode("utf-8"))


def resolve_threads(flag: Optional[int], environ: Mapping[str, str], configured: int) -> int:
    """``--threads`` wins over the environment, which wins over the configuration."""
    if flag is not None:
        threads = flag
    elif environ.get(THREADS_ENV):
        try:
            threads = int(environ[THREADS_ENV])
        except ValueError as e:
            raise ModelError(f"{THREADS_ENV} must be an integer, got {environ[THREADS_ENV]!r}") from e
    else:
        threads = configured
    if threads < 1:
        raise ModelError(f"thread count must be positive, got {threads}")
    return threads


def parse_tolerances(items: Sequence[str]) -> Dict[str, float]:
    """Parse ``name=value`` pairs."""
    out: Dict[str, float] = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ModelError(f"tolerance override must read name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError as e:
            raise ModelError(f"tolerance {name!r} is not a number: {value!r}") from e
    return out


def _generator(cfg: RunConfig) -> GeneratorSeries:
    gen = solve_a(cfg.offspring_law, cfg.drift.c, cfg.series.order)
    LOGGER.info("series of a to order %d by %s, residual %.3e", gen.order, gen.method, gen.residual)
    return gen


def _wave(cfg: RunConfig) -> Any:
    return solve_wave(
        cfg.offspring_law, cfg.drift.c, X_max=cfg.wave.x_max, eps_tail=cfg.wave.eps_tail, tol=cfg.wave.tol
    )


def _distribution(cfg: RunConfig, gen: GeneratorSeries) -> Any:
    return distribution(
        GeneratorEvaluator(gen=gen),
        cfg.barrier.x,  # type: ignore[union-attr]
        cfg.series.dist_order,
        r=cfg.series.radius,
        samples=cfg.series.samples,
    )


def _check_points(q_prime: float, hi: float) -> Any:
    return np.linspace(q_prime + 0.05, hi, CHECK_POINTS)


def _run_solve_a(cfg: RunConfig, checks: _Checks) -> None:
    gen = _generator(cfg)
    checks.store("generator.csv", gen.to_csv())
    checks.store("generator.json", (gen.header_json() + "\n").encode("utf-8"))
    checks.note("alpha", gen.alpha)
    checks.check("ode_residual", gen.residual, "ode_residual")


def _run_wave(cfg: RunConfig, checks: _Checks) -> None:
    wave = _wave(cfg)
    checks.store("wave.csv", wave.to_csv())
    checks.note("wave_residual", wave_residual(wave))
    if wave.K_hat is not None:
        checks.note("K_hat", wave.K_hat)


def _run_dist(cfg: RunConfig, checks: _Checks) -> None:
    gen = _generator(cfg)
    dist = _distribution(cfg, gen)
    checks.store("distribution.csv", dist.to_csv())
    exact = expected_absorbed(cfg.offspring_law, cfg.drift.c, dist.x)
    checks.check("mass_defect", abs(dist.mass_defect), "mass_defect")
    checks.note("mean", dist.mean)
    checks.note("mean_relative_error", abs(dist.mean / exact - 1.0))
    checks.note("tail_correction", dist.tail_correction)
    checks.note("imag_residue", dist.imag_residue)
    checks.note("span_defect", dist.span_defect)


def _simulate(cfg: RunConfig, checks: _Checks) -> EmpiricalDist:
    sim = cfg.sim_config()
    emp = run_ensemble(sim, cfg.simulation.replicas, parallelism=cfg.threads)
    checks.store("simulation.csv", emp.to_csv())
    if emp.upper is not None:
        checks.store("simulation_upper.csv", emp.upper.to_csv())
    if sim.two_barrier:
        exact = two_barrier_mean(sim.law, sim.c, sim.a, sim.b, sim.y)  # type: ignore[arg-type]
    else:
        exact = expected_absorbed(sim.law, sim.c, sim.x)  # type: ignore[arg-type]
    checks.note("mean", emp.mean)
    checks.note("standard_error", emp.standard_error)
    checks.note("exact_mean", exact)
    checks.check("censoring_rate", emp.censoring_rate, "censoring")
    return emp


def _run_simulate(cfg: RunConfig, checks: _Checks) -> None:
    if cfg.simulation.replicas < 1:
        raise ModelError("simulate needs at least one replica")
    _simulate(cfg, checks)


def _run_verify(cfg: RunConfig, checks: _Checks) -> None:
    law, x = cfg.offspring_law, cfg.barrier.x  # type: ignore[union-attr]
    gen = _generator(cfg)
    wave = _wave(cfg)
    evaluator = GeneratorEvaluator(gen=gen, wave=wave)
    checks.check("ode_residual", gen.residual, "ode_residual")

    s = _check_points(law.q_prime, 0.9)
    a_gap = np.max(np.abs(gen(s) - a_from_wave(wave, 1.0 - s)))
    checks.check("a_series_vs_wave", a_gap, "cross_oracle")

    s = _check_points(law.q_prime, 0.95)
    F_gap = np.max(np.abs(evolve_F(evaluator, x, s) - F_from_wave(wave, x, 1.0 - s)))
    checks.check("F_backward_vs_wave", F_gap, "cross_F")

    report = verify_identities(evaluator, x, s)
    checks.check("integral_identity", report.integral_residual, "identity")
    checks.check("exponential_identity", report.exponential_defect, "identity")


def _decades(hi: int) -> List[int]:
    return [10**k for k in range(2, 10) if 10**k < hi]


def _run_report(cfg: RunConfig, checks: _Checks) -> None:
    law, c, x = cfg.offspring_law, cfg.drift.c, cfg.barrier.x  # type: ignore[union-attr]
    params = drift_params(law, c)
    gen = _generator(cfg)
    report: Dict[str, Any] = {"law": law.entries(), "c": c, "x": x, "regime": params.regime.value}

    if params.regime is Regime.SUBCRITICAL_SPEED:
        fit = fit_constant(gen, law, c)
        report["fit"] = fit.as_dict()
        checks.note("exponent_hat", fit.exponent_hat)
        checks.note("constant_hat", fit.constant_hat)
    else:
        ns = _decades(gen.order - 1)
        values = tail_sum_check(gen, law, c, ns)
        report["tail_sum"] = {"n": ns, "ratio": values.tolist()}

    dist = _distribution(cfg, gen)
    checks.store("distribution.csv", dist.to_csv())
    ratios = ratio_diagnostic(dist, gen, x, law, c)
    checks.store("ratios.csv", render_csv([("n", ratios.ns), ("ratio", ratios.ratios)]))
    report["distribution"] = dist.metadata()
    report["ratio"] = {
        "target": ratios.target,
        "n": ratios.ns[-1:].tolist(),
        "last_relative_error": float(ratios.relative_error()[-1]),
    }
    checks.note("ratio_relative_error", float(ratios.relative_error()[-1]))

    if cfg.simulation.replicas > 0:
        report["simulation"] = _simulate(cfg, checks).summary()
    checks.store("report.json", (json.dumps(report, sort_keys=True, indent=2) + "\n").encode("utf-8"))


_COMMANDS: Dict[str, Callable[[RunConfig, _Checks], None]] = {
    "solve-a": _run_solve_a,
    "wave": _run_wave,
    "dist": _run_dist,
    "simulate": _run_simulate,
    "verify": _run_verify,
    "report": _run_report,
}


def _exit_code(checks: _Checks) -> int:
    if any(d.name == "censoring_rate" and d.passed is False for d in checks.diagnostics):
        return EXIT_CENSORED
    if any(d.passed is False for d in checks.diagnostics):
        return EXIT_NUMERICAL
    return EXIT_OK


def _manifest(
    command: str,
    config: str,
    seed: Optional[int],
    threads: int,
    exit_code: int,
    error: Optional[str],
    started: float,
    checks: Optional[_Checks] = None,
) -> RunManifest:
    return RunManifest(
        command=command,
        package_version=__version__,
        numpy_version=np.__version__,
        scipy_version=scipy.__version__,
        seed=seed,
        threads=threads,
        config=config,
        status="ok" if exit_code == EXIT_OK else "failed",
        exit_code=exit_code,
        error=error,
        wall_time=time.perf_counter() - started,
        artifacts=list(checks.artifacts) if checks else [],
        diagnostics=list(checks.diagnostics) if checks else [],
    )


def _write_manifest(directory: Path, manifest: RunManifest) -> Optional[Path]:
    try:
        return write_once(directory / MANIFEST_NAME, ManifestWriter.render(manifest))
    except OSError as e:
        LOGGER.error("could not write the manifest into %s: %s", directory, e)
        return None


def execute(cfg: RunConfig) -> RunResult:
    """
    Run the configured command.

    Artifacts and the manifest go into ``cfg.output.directory``. Exceptions
    are not propagated; they set the exit code and the manifest's error.
    """
    started = time.perf_counter()
    checks = _Checks(cfg)
    error: Optional[str] = None
    try:
        checks.directory.mkdir(parents=True, exist_ok=True)
        _COMMANDS[cfg.command](cfg, checks)
        exit_code = _exit_code(checks)
        failed = [d.name for d in checks.diagnostics if d.passed is False]
        if failed:
            error = f"checks above tolerance: {', '.join(failed)}"
    except (ModelError, OSError) as e:
        LOGGER.error("%s failed: %s", cfg.command, e)
        exit_code, error = EXIT_INVALID, f"{type(e).__name__}: {e}"
    except NumericalError as e:
        LOGGER.error("%s failed: %s", cfg.command, e)
        exit_code, error = EXIT_NUMERICAL, f"{type(e).__name__}: {e}"
    except Exception as e:
        LOGGER.exception("%s failed unexpectedly", cfg.command)
        exit_code, error = EXIT_NUMERICAL, f"{type(e).__name__}: {e}"

    manifest = _manifest(
        cfg.command, cfg.model_dump_json(), cfg.seed, cfg.threads, exit_code, error, started, checks
    )
    path = _write_manifest(checks.directory, manifest)
    return RunResult(exit_code=exit_code, manifest=manifest, manifest_path=path)


def compare(path_a: Path, path_b: Path, tolerances: Optional[Mapping[str, float]] = None) -> CompareReport:
    """
    Column-wise deviations between two CSV artifacts of the same schema.

    A column passes when its largest absolute deviation is within the
    tolerance named after the column, else the ``compare`` tolerance.

    :raises SchemaMismatch: if headers or row counts differ
    """
    tolerances = dict(tolerances or {})
    default = tolerances.get(COMPARE_TOLERANCE, DEFAULT_COMPARE_TOLERANCE)
    header_a, data_a = read_csv(path_a)
    header_b, data_b = read_csv(path_b)
    if header_a != header_b:
        raise SchemaMismatch(f"headers differ: {header_a} vs {header_b}")
    if data_a.shape != data_b.shape:
        raise SchemaMismatch(f"row counts differ: {data_a.shape[0]} vs {data_b.shape[0]}")
    columns = []
    for j, name in enumerate(header_a):
        gap = np.abs(data_a[:, j] - data_b[:, j])
        scale = np.maximum(np.abs(data_a[:, j]), np.abs(data_b[:, j]))
        rel = np.divide(gap, scale, out=np.zeros_like(gap), where=scale > 0.0)
        columns.append(
            ColumnDeviation(
                name=name,
                max_abs=float(np.max(gap, initial=0.0)),
                max_rel=float(np.max(rel, initial=0.0)),
                tolerance=tolerances.get(name, default),
            )
        )
    return CompareReport(path_a=str(path_a), path_b=str(path_b), columns=columns)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bbm-absorb",
        description="Absorbed particle counts of branching Brownian motion with drift.",
    )
    parser.add_argument(
        "command",
        nargs="?",
        choices=COMMANDS + ("compare",),
        help="command to run; defaults to the one in the configuration",
    )
    parser.add_argument("artifacts", nargs="*", type=Path, help="the two CSV files for 'compare'")
    parser.add_argument("--config", type=Path, help="TOML configuration or a manifest to re-run")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", type=Path, help="override the output directory")
    parser.add_argument("--threads", type=int, help=f"worker processes; falls back to ${THREADS_ENV}")
    parser.add_argument(
        "--tolerance", action="append", default=[], metavar="NAME=VALUE", help="override a tolerance"
    )
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


def _main_compare(args: argparse.Namespace) -> int:
    if len(args.artifacts) != 2:
        LOGGER.error("compare needs exactly two CSV files")
        return EXIT_INVALID
    try:
        report = compare(args.artifacts[0], args.artifacts[1], parse_tolerances(args.tolerance))
    except (ModelError, OSError, ValueError) as e:
        LOGGER.error("compare failed: %s", e)
        return EXIT_INVALID
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def _configure(args: argparse.Namespace) -> RunConfig:
    if args.config is None:
        raise ModelError("--config is required")
    cfg = load_config(args.config)
    document = cfg.model_dump(mode="json")
    if args.command is not None:
        document["command"] = args.command
    if args.seed is not None:
        document["seed"] = args.seed
    if args.out is not None:
        document["output"]["directory"] = str(args.out)
    document["threads"] = resolve_threads(args.threads, os.environ, cfg.threads)
    overrides = parse_tolerances(args.tolerance)
    # only the compare command reads this one
    overrides.pop(COMPARE_TOLERANCE, None)
    document["tolerances"].update(overrides)
    return RunConfig.model_validate(document)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.command == "compare":
        return _main_compare(args)

    started = time.perf_counter()
    try:
        cfg = _configure(args)
    except (ModelError, ManifestDecodeError, ValidationError, OSError) as e:
        LOGGER.error("invalid configuration: %s", e)
        directory = args.out if args.out is not None else Path("out")
        manifest = _manifest(
            args.command or "unknown", "", args.seed, 1, EXIT_INVALID, f"{type(e).__name__}: {e}", started
        )
        _write_manifest(directory, manifest)
        return EXIT_INVALID

    result = execute(cfg)
    if result.manifest_path is not None:
        print(result.manifest_path)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
