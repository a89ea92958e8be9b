"""Helpers shared by the verification checks: residual conversion, timing, tables."""

from __future__ import annotations

import functools
import logging
import time
from collections.abc import Callable
from typing import ParamSpec

from staeckelkit.exprs.sampling import ZeroTest, worst
from staeckelkit.models import CheckResult, CheckStatus, Report, Residual

logger = logging.getLogger(__name__)

P = ParamSpec("P")


def residual_from(label: str, tests: list[ZeroTest]) -> Residual:
    """Collapse the zero tests of one index tuple into a single residual."""
    if not tests:
        return Residual(label=label, value=0.0)
    w = worst(tests)
    return Residual(label=label, value=w.max_abs, witness=w.witness)


def timed(name: str) -> Callable[[Callable[P, CheckResult]], Callable[P, CheckResult]]:
    """Record wall time on the returned CheckResult and log start and outcome."""

    def decorate(fn: Callable[P, CheckResult]) -> Callable[P, CheckResult]:
        @functools.wraps(fn)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> CheckResult:
            logger.info("Running %s", name)
            start = time.perf_counter()
            result = fn(*args, **kwargs)
            result.wall_time = time.perf_counter() - start
            logger.info(
                "%s: %s (max residual %.3e, tol %.1e, %.2fs)",
                result.name,
                result.status.value,
                result.max_residual,
                result.tol,
                result.wall_time,
            )
            for residual in result.residuals:
                logger.debug("  %s: %.3e", residual.label, residual.value)
            return result

        return wrapper

    return decorate


_HEADER = ("check", "status", "max residual", "tol", "time [s]", "witness")


def _cells(check: CheckResult) -> tuple[str, ...]:
    if check.status is CheckStatus.SKIP or check.max_residual != check.max_residual:
        residual = "-"
    else:
        residual = f"{check.max_residual:.3e}"
    witness = ""
    if check.witness is not None:
        witness = "(" + ", ".join(f"{w:.6g}" for w in check.witness) + ")"
    return (
        check.name,
        check.status.value,
        residual,
        f"{check.tol:.1e}",
        f"{check.wall_time:.2f}",
        witness,
    )


def format_row(check: CheckResult) -> str:
    line = "  ".join(f"{cell:<14}" for cell in _cells(check)[:5]) + _cells(check)[5]
    if check.message:
        line += f"  {check.message}"
    return line.rstrip()


def format_table(report: Report) -> str:
    """Human-readable table of a report, one row per check."""
    lines = [f"case: {report.case}  seed: {report.seed}"]
    lines.append(("  ".join(f"{h:<14}" for h in _HEADER[:5]) + _HEADER[5]).rstrip())
    lines.extend(format_row(check) for check in report.checks)
    verdict = "PASS" if report.passed else "FAIL"
    lines.append(f"{len(report.checks)} checks, overall {verdict}")
    return "\n".join(lines)
