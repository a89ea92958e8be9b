"""Tensor-product Gauss-Legendre quadrature and smooth test functions on a box."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from numpy.polynomial.legendre import leggauss

from staeckelkit.errors import QuadratureFailure
from staeckelkit.exprs import (
    ONE,
    Domain,
    Expr,
    FloatArray,
    Var,
    evaluate_batch_many,
    exp,
    mul,
    power,
    sub,
)
from staeckelkit.models import DEFAULT_QUAD_NODES

logger = logging.getLogger(__name__)

MAX_QUAD_DIM = 3
# Points evaluated per batch; bounds the memory of the evaluation memo.
CHUNK = 16_384


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings for quadrature-based checks."""

    nodes: int = DEFAULT_QUAD_NODES
    pairs: int = 10
    degree: int = 2

    def __post_init__(self) -> None:
        if self.nodes < 2:
            raise ValueError(f"need at least 2 quadrature nodes, got {self.nodes}")
        if self.pairs < 1:
            raise ValueError(f"need at least one test pair, got {self.pairs}")


def gauss_legendre_grid(d: Domain, nodes: int) -> tuple[FloatArray, FloatArray]:
    """Tensor-product Gauss-Legendre rule on ``d``: (points[N, n], weights[N])."""
    if d.n > MAX_QUAD_DIM:
        raise ValueError(f"quadrature supports up to {MAX_QUAD_DIM} axes, got {d.n}")
    ref_x, ref_w = leggauss(nodes)
    axes_x = []
    axes_w = []
    for lo, hi in d.intervals:
        half = 0.5 * (hi - lo)
        axes_x.append(lo + half * (ref_x + 1.0))
        axes_w.append(half * ref_w)
    grid = np.meshgrid(*axes_x, indexing="ij")
    weights = np.meshgrid(*axes_w, indexing="ij")
    points = np.stack([g.ravel() for g in grid], axis=1)
    w = np.prod(np.stack([g.ravel() for g in weights], axis=0), axis=0)
    return points, w


def pairwise_sum(values: npt.ArrayLike) -> float:
    """Tree summation with a fixed association order."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    while v.size > 1:
        if v.size % 2:
            v = np.append(v, 0.0)
        v = v[0::2] + v[1::2]
    return float(v[0])


def scaled_coordinates(d: Domain) -> list[Expr]:
    """u_i = (x_i - mid_i) / half_i, mapping each axis interval onto [-1, 1]."""
    out = []
    for i, (lo, hi) in enumerate(d.intervals):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        out.append(mul(1.0 / half, sub(Var(i), mid)))
    return out


def bump(d: Domain) -> Expr:
    """prod_i exp(1 - 1/(1 - u_i^2)): smooth, 1 at the centre, flat to all orders at the faces.

    Only meaningful strictly inside ``d``; quadrature nodes never touch the faces.
    """
    factors = [exp(sub(ONE, ONE / sub(ONE, power(u, 2)))) for u in scaled_coordinates(d)]
    return mul(*factors)


def integrate_products(
    pairs: Sequence[tuple[Expr, Expr]], weight: Expr, d: Domain, nodes: int
) -> list[float]:
    """∫ a·b·weight over ``d`` for every (a, b) in ``pairs``.

    Raises:
        QuadratureFailure: if an integrand cannot be evaluated at a node.
    """
    points, w = gauss_legendre_grid(d, nodes)
    flat = [e for pair in pairs for e in pair]
    integrands = np.empty((len(pairs), points.shape[0]))
    for start in range(0, points.shape[0], CHUNK):
        block = points[start : start + CHUNK]
        values, valid = evaluate_batch_many([weight, *flat], block)
        if not valid.all():
            bad = block[int(np.argmin(valid))]
            raise QuadratureFailure(f"integrand undefined at quadrature node {bad.tolist()}")
        weight_vals = values[0]
        for k in range(len(pairs)):
            a, b = values[1 + 2 * k], values[2 + 2 * k]
            integrands[k, start : start + block.shape[0]] = a * b * weight_vals
    return [pairwise_sum(w * row) for row in integrands]


def weight_sign(weight: Expr, d: Domain, nodes: int) -> float:
    """+1 or -1 when ``weight`` keeps one sign on the quadrature grid.

    Raises:
        QuadratureFailure: if the weight vanishes, changes sign or is undefined.
    """
    points, _ = gauss_legendre_grid(d, nodes)
    lo = np.inf
    hi = -np.inf
    for start in range(0, points.shape[0], CHUNK):
        values, valid = evaluate_batch_many([weight], points[start : start + CHUNK])
        if not valid.all():
            raise QuadratureFailure("weight is undefined at a quadrature node")
        lo = min(lo, float(values.min()))
        hi = max(hi, float(values.max()))
    if lo > 0.0:
        return 1.0
    if hi < 0.0:
        return -1.0
    raise QuadratureFailure(f"weight changes sign on the domain (range [{lo:.3e}, {hi:.3e}])")
