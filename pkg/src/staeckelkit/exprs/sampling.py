"""Randomized zero testing of expressions over a sampling domain."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from staeckelkit.errors import DomainTooSingular
from staeckelkit.exprs.nodes import Expr, FloatArray, evaluate_batch_many
from staeckelkit.models import Domain

logger = logging.getLogger(__name__)

OVERSAMPLING = 10
MAX_INVALID_FRACTION = 0.9


@dataclass(frozen=True)
class ZeroTest:
    """Verdict of a sampled zero test."""

    verdict: bool
    max_abs: float
    witness: list[float] | None
    samples_used: int
    discarded: int = 0


def valid_sample(exprs: Sequence[Expr], d: Domain) -> tuple[FloatArray, FloatArray]:
    """Evaluate ``exprs`` on ``d.samples`` points where all of them are defined.

    Candidates come from one oversampled block, so the k-th candidate depends
    only on the seed. Returns ``(points, values)`` with ``values`` shaped
    ``(len(exprs), m)``.

    Raises:
        DomainTooSingular: when more than 90% of the drawn points are invalid.
    """
    for e in exprs:
        if e.free_vars and max(e.free_vars) >= d.n:
            raise ValueError(f"expression uses x{max(e.free_vars) + 1} on a {d.n}-axis domain")
    want = d.samples
    candidates = d.points(OVERSAMPLING * want)
    kept_points: list[FloatArray] = []
    kept_values: list[FloatArray] = []
    kept = attempted = 0
    for start in range(0, candidates.shape[0], want):
        chunk = candidates[start : start + want]
        values, valid = evaluate_batch_many(exprs, chunk)
        attempted += chunk.shape[0]
        kept_points.append(chunk[valid])
        kept_values.append(values[:, valid])
        kept += int(valid.sum())
        if kept >= want:
            break
    discarded = attempted - kept
    if discarded > MAX_INVALID_FRACTION * attempted:
        raise DomainTooSingular(
            f"{discarded} of {attempted} sample points could not be evaluated"
        )
    if discarded:
        logger.warning("Discarded %d of %d sample points (singular set)", discarded, attempted)
    points = np.concatenate(kept_points)[:want]
    values = np.concatenate(kept_values, axis=1)[:, :want]
    return points, values


def _verdicts(
    points: FloatArray, magnitudes: FloatArray, tol: float, want: int
) -> list[ZeroTest]:
    discarded = 0 if points.shape[0] >= want else want - points.shape[0]
    results = []
    for row in magnitudes:
        k = int(np.argmax(row))
        max_abs = float(row[k])
        verdict = max_abs <= tol
        results.append(
            ZeroTest(
                verdict=verdict,
                max_abs=max_abs,
                witness=None if verdict else [float(v) for v in points[k]],
                samples_used=points.shape[0],
                discarded=discarded,
            )
        )
    return results


def zero_tests(exprs: Sequence[Expr], d: Domain, tol: float) -> list[ZeroTest]:
    """Zero-test several expressions on one shared sample (shared subterms evaluated once)."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not exprs:
        return []
    points, values = valid_sample(exprs, d)
    return _verdicts(points, np.abs(values), tol, d.samples)


def scaled_zero_tests(
    exprs: Sequence[Expr], scales: Sequence[Sequence[Expr]], d: Domain, tol: float
) -> list[ZeroTest]:
    """Zero-test |e| / max(1, sum |s|) where ``s`` runs over the scale terms of ``e``.

    The scale terms are the parts ``e`` cancels down from, so round-off in
    large intermediate values is not mistaken for a nonzero result.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if len(scales) != len(exprs):
        raise ValueError(f"need one scale list per expression, got {len(scales)}")
    if not exprs:
        return []
    flat = [*exprs, *(s for terms in scales for s in terms)]
    points, values = valid_sample(flat, d)
    magnitudes = np.abs(values[: len(exprs)])
    offset = len(exprs)
    for k, terms in enumerate(scales):
        block = np.abs(values[offset : offset + len(terms)])
        offset += len(terms)
        magnitudes[k] /= np.maximum(1.0, block.sum(axis=0))
    return _verdicts(points, magnitudes, tol, d.samples)


def is_zero_sampled(e: Expr, d: Domain, tol: float) -> ZeroTest:
    """Sampled test that ``e`` vanishes on ``d`` to within ``tol``."""
    return zero_tests([e], d, tol)[0]


def worst(tests: Sequence[ZeroTest]) -> ZeroTest:
    """The test with the largest residual (first one on ties)."""
    return max(tests, key=lambda t: t.max_abs)
