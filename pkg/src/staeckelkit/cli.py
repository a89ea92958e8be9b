"""Command-line front end: verify, separate, report and gallery-list."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from collections.abc import Callable
from dataclasses import replace
from pathlib import Path

from staeckelkit.config import ReportStore, SpecManager, System
from staeckelkit.errors import RowLocalityError, SpecError, StaeckelError
from staeckelkit.gallery import case_by_name, list_cases
from staeckelkit.models import DEFAULT_SAMPLES, DEFAULT_SEED, CheckResult, Report, Residual
from staeckelkit.operators import (
    check_commutation,
    check_potential_commutation,
    check_self_adjoint,
    quantize,
)
from staeckelkit.quadrature import MAX_QUAD_DIM, QuadratureSpec
from staeckelkit.reporting import format_row, format_table
from staeckelkit.separation import (
    MIN_STEPS,
    EnergyVector,
    check_step_halving,
    export_axes,
    verify_eigen,
)
from staeckelkit.staeckel import (
    check_benenti_all,
    check_identity_eq6,
    check_involution,
    check_reconstruction,
    determinant,
    with_potentials,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

CHECKS = ("reconstruction", "involution", "eq6", "commute", "selfadjoint", "benenti")
# Smallest coarse-to-fine residual ratio accepted by --refine (fourth-order steps).
REFINE_MIN_RATIO = 8.0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staeckelkit",
        description="Build and verify Stäckel integrable systems.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    source = argparse.ArgumentParser(add_help=False)
    where = source.add_mutually_exclusive_group(required=True)
    where.add_argument("--spec", type=Path, help="system spec file (TOML)")
    where.add_argument("--case", help="gallery case, e.g. vandermonde:3")
    source.add_argument("--tol", type=float, help="override the check tolerance")
    source.add_argument("--samples", type=int, help=f"sample count (default {DEFAULT_SAMPLES})")
    source.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    source.add_argument("--json", type=Path, help="write the machine-readable report here")
    source.add_argument(
        "--no-timing", action="store_true", help="omit wall times from the JSON report"
    )

    verify = sub.add_parser("verify", parents=[source], help="run verification checks")
    verify.add_argument(
        "--check", action="append", choices=CHECKS, default=[], help="check to run (repeatable)"
    )
    verify.add_argument("--all", action="store_true", help="run every check")

    separate = sub.add_parser(
        "separate", parents=[source], help="solve the separated equations and verify Psi"
    )
    separate.add_argument("--E", dest="energy", help="separation constants, e.g. -1,-1")
    separate.add_argument("--steps", type=int, help="RK4 steps per axis")
    separate.add_argument("--export", type=Path, help="directory for axis<k>.csv files")
    separate.add_argument(
        "--refine", action="store_true", help="also check the residual drop when steps double"
    )

    report = sub.add_parser("report", help="pretty-print a stored JSON report")
    report.add_argument("path", type=Path)

    sub.add_parser("gallery-list", help="list the built-in gallery families")
    return parser


def log_level(args: argparse.Namespace) -> int:
    if getattr(args, "verbose", False):
        return logging.DEBUG
    if getattr(args, "quiet", False):
        return logging.WARNING
    return logging.INFO


def _check_options(args: argparse.Namespace) -> None:
    """Reject out-of-range numeric options before any work starts.

    Raises:
        SpecError: naming the offending option.
    """
    if args.samples is not None and args.samples < 1:
        raise SpecError(f"--samples must be >= 1, got {args.samples}")
    if args.tol is not None and not args.tol > 0.0:
        raise SpecError(f"--tol must be positive, got {args.tol}")
    steps = getattr(args, "steps", None)
    if steps is not None and steps < MIN_STEPS:
        raise SpecError(f"--steps must be >= {MIN_STEPS}, got {steps}")


def load_system(args: argparse.Namespace) -> System:
    """Resolve --spec or --case, applying the --samples and --seed overrides.

    Raises:
        SpecError: for an unreadable spec file, an unknown case name or an
            out-of-range option.
        RowLocalityError: if the spec's matrix is not row-local.
    """
    _check_options(args)
    if args.case is not None:
        try:
            case = case_by_name(
                args.case,
                samples=args.samples if args.samples is not None else DEFAULT_SAMPLES,
                seed=args.seed if args.seed is not None else DEFAULT_SEED,
            )
        except ValueError as e:
            raise SpecError(str(e)) from e
        return System.from_case(case)
    system = SpecManager(args.spec).load_system()
    domain = system.domain
    if args.samples is not None:
        domain = domain.with_samples(args.samples)
    if args.seed is not None:
        domain = domain.with_seed(args.seed)
    return replace(system, domain=domain)


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _self_adjoint(system: System, tol: float) -> CheckResult:
    if system.n > MAX_QUAD_DIM:
        return CheckResult.skipped(
            "selfadjoint", f"quadrature supports up to {MAX_QUAD_DIM} axes"
        )
    d = system.domain
    ops = quantize(system.matrix, d, system.tolerances.eps_det)
    phi = determinant(system.matrix)
    quad = QuadratureSpec(nodes=system.tolerances.quad_nodes)
    residuals: list[Residual] = []
    elapsed = 0.0
    for a, op in enumerate(ops):
        result = check_self_adjoint(op, phi, d, quad, tol, label=f"H{a + 1}")
        residuals.extend(result.residuals)
        elapsed += result.wall_time
    merged = CheckResult.from_residuals("selfadjoint", residuals, tol)
    merged.wall_time = elapsed
    return merged


def _no_potential(name: str) -> CheckResult:
    return CheckResult.skipped(name, "system defines no potential")


def _run_check(name: str, system: System) -> list[CheckResult]:
    S, d, tols = system.matrix, system.domain, system.tolerances
    V = system.check_potential
    if name == "reconstruction":
        return [check_reconstruction(S, d, tols.tol)]
    if name == "involution":
        return [check_involution(S, d, tols.tol, V=V, eps_det=tols.eps_det)]
    if name == "eq6":
        return [check_identity_eq6(S, d, tols.tol_second)]
    if name == "commute":
        ops = quantize(S, d, tols.eps_det, tols.tol_second)
        results = [check_commutation(ops, d, tols.tol_second)]
        if V is None:
            results.append(_no_potential("commute-potential"))
        else:
            results.append(check_potential_commutation(S, V, d, tols.tol_second))
        return results
    if name == "selfadjoint":
        return [_self_adjoint(system, tols.tol_selfadjoint)]
    if name == "benenti":
        if V is None:
            return [_no_potential("benenti")]
        return [check_benenti_all(with_potentials(S, V, d), d, tols.tol)]
    raise ValueError(f"unknown check {name!r}")


def _guarded(name: str, run: Callable[[], list[CheckResult]]) -> list[CheckResult]:
    """Turn an operational failure of one check into an error result."""
    start = time.perf_counter()
    try:
        return run()
    except StaeckelError as e:
        logger.error("%s failed: %s", name, e)
        result = CheckResult.error(name, str(e))
        result.wall_time = time.perf_counter() - start
        return [result]


def _emit(report: Report, results: list[CheckResult]) -> None:
    for result in results:
        report.checks.append(result)
        print(format_row(result), flush=True)


def _finish(report: Report, args: argparse.Namespace) -> int:
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{len(report.checks)} checks, overall {verdict}")
    if args.json is not None:
        ReportStore(args.json).save(report, include_timing=not args.no_timing)
    return EXIT_OK if report.passed else EXIT_FAILED


def _header(report: Report) -> None:
    print(f"case: {report.case}  seed: {report.seed}", flush=True)


def cmd_verify(args: argparse.Namespace) -> int:
    selected = list(CHECKS) if args.all else list(dict.fromkeys(args.check))
    if not selected:
        print("verify: choose checks with --check NAME or --all", file=sys.stderr)
        return EXIT_USAGE
    system = load_system(args)
    if args.tol is not None:
        system = replace(
            system, tolerances=replace(system.tolerances, tol=args.tol, tol_second=args.tol)
        )
    report = Report(case=system.name, seed=system.domain.seed)
    _header(report)
    for name in selected:
        _emit(report, _guarded(name, lambda name=name: _run_check(name, system)))
    return _finish(report, args)


# ---------------------------------------------------------------------------
# separate
# ---------------------------------------------------------------------------


def _refine(system: System, energy: EnergyVector) -> CheckResult:
    start = time.perf_counter()
    V = system.potential
    ratio = check_step_halving(system.matrix, V, energy, system.domain)
    # residual is fine/coarse, so the check passes when doubling gains >= 8x
    residual = Residual("fine/coarse", 1.0 / ratio if ratio > 0.0 else float("inf"))
    result = CheckResult.from_residuals(
        "step-halving", [residual], 1.0 / REFINE_MIN_RATIO, message=f"ratio {ratio:.1f}"
    )
    result.wall_time = time.perf_counter() - start
    return result


def cmd_separate(args: argparse.Namespace) -> int:
    system = load_system(args)
    try:
        energy = EnergyVector.parse(args.energy) if args.energy else system.energy
    except ValueError as e:
        print(f"separate: bad --E value: {e}", file=sys.stderr)
        return EXIT_USAGE
    if energy is None:
        print("separate: no separation constants; pass --E or add [energy] E", file=sys.stderr)
        return EXIT_USAGE
    if len(energy) != system.n:
        print(f"separate: need {system.n} energies, got {len(energy)}", file=sys.stderr)
        return EXIT_USAGE
    steps = args.steps if args.steps is not None else system.tolerances.steps
    if steps < MIN_STEPS:
        print(f"separate: need at least {MIN_STEPS} steps, got {steps}", file=sys.stderr)
        return EXIT_USAGE
    tol = args.tol if args.tol is not None else system.tolerances.tol_eigen
    report = Report(case=system.name, seed=system.domain.seed)
    _header(report)

    def run() -> list[CheckResult]:
        outcome = verify_eigen(
            system.matrix, system.potential, energy, system.domain, steps, tol
        )
        if args.export is not None:
            export_axes(outcome.axes, args.export)
        return [outcome.eigen, outcome.uncoupling]

    _emit(report, _guarded("separate", run))
    if args.refine:
        _emit(report, _guarded("step-halving", lambda: [_refine(system, energy)]))
    return _finish(report, args)


# ---------------------------------------------------------------------------
# report / gallery-list
# ---------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    report = ReportStore(args.path).load()
    print(format_table(report))
    return EXIT_OK


def cmd_gallery_list(args: argparse.Namespace) -> int:
    for family, description in list_cases():
        print(f"{family + ':N':<22}{description}")
    return EXIT_OK


_COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "verify": cmd_verify,
    "separate": cmd_separate,
    "report": cmd_report,
    "gallery-list": cmd_gallery_list,
}


def run(args: argparse.Namespace) -> int:
    """Dispatch a parsed command line; returns the process exit code."""
    try:
        return _COMMANDS[args.command](args)
    except RowLocalityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
