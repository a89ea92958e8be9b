"""Separated ODEs, product eigenfunctions and verification of the joint eigenproblem."""

from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt

from staeckelkit.errors import GridMismatch
from staeckelkit.exprs import (
    ZERO,
    Domain,
    Expr,
    FloatArray,
    add,
    evaluate_batch_many,
    evaluate_on_axis,
    mul,
    simplify,
    sub,
)
from staeckelkit.models import DEFAULT_STEPS, DEFAULT_TOL_EIGEN, CheckResult, Residual
from staeckelkit.operators import DiffOp, potential_operators
from staeckelkit.parallel import map_ordered
from staeckelkit.staeckel import StaeckelMatrix

logger = logging.getLogger(__name__)

MIN_STEPS = 16
MAX_TUPLES = 10_000
RESIDUAL_EPS = 1e-12
DEFAULT_TOL_UNCOUPLING = 1e-8

IntArray = npt.NDArray[np.int_]


@dataclass(frozen=True)
class EnergyVector:
    """Separation constants E_1 .. E_n."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values or not all(np.isfinite(values)):
            raise ValueError(f"energies must be finite reals, got {self.values}")
        object.__setattr__(self, "values", values)

    @classmethod
    def parse(cls, text: str) -> EnergyVector:
        """Comma-separated floats, e.g. ``"-1,-1"``."""
        return cls(tuple(float(part) for part in text.split(",") if part.strip()))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]


def _zero_potential(n: int) -> list[Expr]:
    return [ZERO] * n


def separated_rhs(
    S: StaeckelMatrix, V: Sequence[Expr] | None, E: EnergyVector, alpha: int
) -> Expr:
    """r_a = sum_j S[a][j] E_j - V_a, so the axis equation reads psi'' = r_a psi."""
    if len(E) != S.n:
        raise ValueError(f"need {S.n} energies, got {len(E)}")
    V = list(V) if V is not None else _zero_potential(S.n)
    if V[alpha].free_vars - {alpha}:
        raise ValueError(f"V[{alpha + 1}] must depend on x{alpha + 1} only")
    energy = add(*(mul(S[alpha, j], E[j]) for j in range(S.n)))
    return simplify(sub(energy, V[alpha]))


@dataclass(frozen=True, eq=False)
class AxisSolution:
    """RK4 solution of psi'' = r psi on a uniform grid of one axis."""

    axis: int
    grid: FloatArray
    psi: FloatArray
    dpsi: FloatArray
    init: tuple[float, float] = (1.0, 0.0)

    @property
    def step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def steps(self) -> int:
        return len(self.grid) - 1

    def second_derivative(self) -> FloatArray:
        """Five-point central differences of psi; NaN at the two nodes next to each end."""
        h = self.step
        out = np.full_like(self.psi, np.nan)
        p = self.psi
        out[2:-2] = (-p[4:] + 16.0 * p[3:-1] - 30.0 * p[2:-2] + 16.0 * p[1:-3] - p[:-4]) / (
            12.0 * h * h
        )
        return out


def solve_separated_ode(
    r: Expr,
    interval: tuple[float, float],
    init: tuple[float, float] = (1.0, 0.0),
    steps: int = DEFAULT_STEPS,
    axis: int | None = None,
) -> AxisSolution:
    """Fixed-step classical RK4 for (psi, psi')' = (psi', r psi).

    ``r`` must depend on one variable at most; ``axis`` defaults to it.

    Raises:
        EvalError: if r cannot be evaluated on the interval.
    """
    if steps < MIN_STEPS:
        raise ValueError(f"need at least {MIN_STEPS} steps, got {steps}")
    if len(r.free_vars) > 1:
        raise ValueError(f"r must be univariate, mentions {sorted(r.free_vars)}")
    if axis is None:
        axis = min(r.free_vars) if r.free_vars else 0
    lo, hi = interval
    fine = np.linspace(lo, hi, 2 * steps + 1)
    r_fine = evaluate_on_axis(r, axis, fine)
    h = (hi - lo) / steps
    psi = np.empty(steps + 1)
    dpsi = np.empty(steps + 1)
    y, dy = float(init[0]), float(init[1])
    psi[0], dpsi[0] = y, dy
    for k in range(steps):
        r0, rm, r1 = r_fine[2 * k], r_fine[2 * k + 1], r_fine[2 * k + 2]
        k1y, k1d = dy, r0 * y
        k2y, k2d = dy + 0.5 * h * k1d, rm * (y + 0.5 * h * k1y)
        k3y, k3d = dy + 0.5 * h * k2d, rm * (y + 0.5 * h * k2y)
        k4y, k4d = dy + h * k3d, r1 * (y + h * k3y)
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        dy += h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        psi[k + 1], dpsi[k + 1] = y, dy
    if not np.any(psi != 0.0):
        logger.warning("Axis %d solution is identically zero", axis + 1)
    return AxisSolution(axis=axis, grid=fine[::2].copy(), psi=psi, dpsi=dpsi, init=init)


@dataclass(frozen=True, eq=False)
class ProductSolution:
    """Psi(x) = prod_a psi_a(x_a) on the tensor grid of the axis solutions."""

    axes: tuple[AxisSolution, ...]
    _second: tuple[FloatArray, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_second", tuple(a.second_derivative() for a in self.axes))

    @property
    def n(self) -> int:
        return len(self.axes)

    def _check(self, idx: IntArray) -> IntArray:
        idx = np.atleast_2d(np.asarray(idx, dtype=int))
        if idx.shape[1] != self.n:
            raise ValueError(f"node tuples need {self.n} indices, got {idx.shape[1]}")
        return idx

    def _factor(self, axis: int, order: int, nodes: IntArray) -> FloatArray:
        sol = self.axes[axis]
        if order == 0:
            return sol.psi[nodes]
        if order == 1:
            return sol.dpsi[nodes]
        if order == 2:
            values = self._second[axis][nodes]
            if np.isnan(values).any():
                raise ValueError("second derivatives exclude the two boundary nodes per end")
            return values
        raise ValueError(f"derivative order {order} per axis is not available")

    def derivative(self, mi: tuple[int, ...], idx: npt.ArrayLike) -> FloatArray:
        """d^mi Psi at node tuples (per-axis order <= 2)."""
        nodes = self._check(np.asarray(idx))
        out = np.ones(nodes.shape[0])
        for axis, order in enumerate(mi):
            out = out * self._factor(axis, order, nodes[:, axis])
        return out

    def value(self, idx: npt.ArrayLike) -> FloatArray:
        return self.derivative((0,) * self.n, idx)

    def d1(self, i: int, idx: npt.ArrayLike) -> FloatArray:
        return self.derivative(tuple(1 if k == i else 0 for k in range(self.n)), idx)

    def d2(self, i: int, idx: npt.ArrayLike) -> FloatArray:
        return self.derivative(tuple(2 if k == i else 0 for k in range(self.n)), idx)

    def coordinates(self, idx: npt.ArrayLike) -> FloatArray:
        nodes = self._check(np.asarray(idx))
        return np.stack([self.axes[a].grid[nodes[:, a]] for a in range(self.n)], axis=1)

    def apply(self, op: DiffOp, idx: npt.ArrayLike) -> FloatArray:
        """(op Psi) at node tuples, using finite-difference second derivatives."""
        nodes = self._check(np.asarray(idx))
        keys = list(op.terms)
        coeffs, valid = evaluate_batch_many([op.terms[k] for k in keys], self.coordinates(nodes))
        if not valid.all():
            raise ValueError("operator coefficients undefined at a grid node")
        total = np.zeros(nodes.shape[0])
        for row, mi in zip(coeffs, keys, strict=True):
            total += row * self.derivative(mi, nodes)
        return total


def assemble_product(axes: Sequence[AxisSolution]) -> ProductSolution:
    """Combine one axis solution per dimension.

    Raises:
        GridMismatch: if axes are missing, duplicated or too coarse.
    """
    ordered = sorted(axes, key=lambda a: a.axis)
    if [a.axis for a in ordered] != list(range(len(ordered))):
        raise GridMismatch(f"need one solution per axis, got axes {[a.axis for a in axes]}")
    for a in ordered:
        if len(a.grid) < 5 or len(a.psi) != len(a.grid) or len(a.dpsi) != len(a.grid):
            raise GridMismatch(f"axis {a.axis + 1}: grid too short or inconsistent")
    return ProductSolution(tuple(ordered))


def interior_tuples(solution: ProductSolution, max_tuples: int = MAX_TUPLES) -> IntArray:
    """Evenly spaced interior node tuples, at most ``max_tuples`` of them."""
    per_axis = max(1, int(np.floor(max_tuples ** (1.0 / solution.n) + 1e-9)))
    axes = []
    for a in solution.axes:
        last = a.steps - 2
        count = min(per_axis, last - 1)
        axes.append(np.unique(np.linspace(2, last, count).round().astype(int)))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass
class EigenVerification:
    """Outcome of :func:`verify_eigen`: both checks and the axis solutions."""

    eigen: CheckResult
    uncoupling: CheckResult
    axes: list[AxisSolution]

    @property
    def passed(self) -> bool:
        return self.eigen.passed and self.uncoupling.passed


def solve_axes(
    S: StaeckelMatrix,
    V: Sequence[Expr] | None,
    E: EnergyVector,
    d: Domain,
    steps: int = DEFAULT_STEPS,
    inits: Sequence[tuple[float, float]] | None = None,
) -> list[AxisSolution]:
    """Solve every separated equation on its axis interval (axes run in parallel)."""
    inits = list(inits) if inits is not None else [(1.0, 0.0)] * S.n

    def one(alpha: int) -> AxisSolution:
        r = separated_rhs(S, V, E, alpha)
        return solve_separated_ode(r, d.intervals[alpha], inits[alpha], steps, axis=alpha)

    return map_ordered(one, range(S.n))


def _relative_residual(
    label: str, defect: FloatArray, scale: float, product: ProductSolution, idx: IntArray
) -> Residual:
    relative = np.abs(defect) / scale
    k = int(np.argmax(relative))
    witness = [float(v) for v in product.coordinates(idx[k : k + 1])[0]]
    return Residual(label, float(relative[k]), witness)


def verify_eigen(
    S: StaeckelMatrix,
    V: Sequence[Expr] | None,
    E: EnergyVector,
    d: Domain,
    steps: int = DEFAULT_STEPS,
    tol: float = DEFAULT_TOL_EIGEN,
    tol_uncoupling: float = DEFAULT_TOL_UNCOUPLING,
    inits: Sequence[tuple[float, float]] | None = None,
) -> EigenVerification:
    """Check Ȟ_a Psi = E_a Psi for the product of the axis solutions.

    Residuals are relative, |Ȟ_a Psi - E_a Psi| / (1e-12 + max |Psi|), over at
    most 10^4 interior grid tuples; second derivatives come from five-point
    differences of the grids. Also checks sum_j S[a][j] Ȟ_j Psi = (d_a^2 + V_a) Psi.
    """
    logger.info("Running separate (%d steps per axis)", steps)
    start = time.perf_counter()
    V = list(V) if V is not None else _zero_potential(S.n)
    n = S.n
    ops = potential_operators(S, V)
    axes = solve_axes(S, V, E, d, steps, inits)
    product = assemble_product(axes)
    idx = interior_tuples(product)
    psi = product.value(idx)
    scale = RESIDUAL_EPS + float(np.max(np.abs(psi)))
    applied = [product.apply(op, idx) for op in ops]
    eigen_residuals = [
        _relative_residual(f"H{a + 1}", applied[a] - E[a] * psi, scale, product, idx)
        for a in range(n)
    ]

    flat = [S[a, j] for a in range(n) for j in range(n)] + list(V)
    values, _ = evaluate_batch_many(flat, product.coordinates(idx))
    uncoupling_residuals = []
    for a in range(n):
        lhs = np.sum([values[a * n + j] * applied[j] for j in range(n)], axis=0)
        rhs = product.d2(a, idx) + values[n * n + a] * psi
        uncoupling_residuals.append(
            _relative_residual(f"row {a + 1}", lhs - rhs, scale, product, idx)
        )
    logger.debug("Checked %d grid tuples", len(idx))

    elapsed = time.perf_counter() - start
    eigen = CheckResult.from_residuals(
        "separate", eigen_residuals, tol, message=f"{len(idx)} tuples, {steps} steps"
    )
    uncoupling = CheckResult.from_residuals("uncoupling", uncoupling_residuals, tol_uncoupling)
    eigen.wall_time = uncoupling.wall_time = elapsed
    logger.info(
        "separate: %s (max residual %.3e), uncoupling: %s (max residual %.3e)",
        eigen.status.value,
        eigen.max_residual,
        uncoupling.status.value,
        uncoupling.max_residual,
    )
    return EigenVerification(eigen=eigen, uncoupling=uncoupling, axes=axes)


def check_step_halving(
    S: StaeckelMatrix,
    V: Sequence[Expr] | None,
    E: EnergyVector,
    d: Domain,
    steps: int = MIN_STEPS,
) -> float:
    """Ratio of the worst eigen-residual at ``steps`` to that at ``2 * steps``."""
    coarse = verify_eigen(S, V, E, d, steps).eigen.max_residual
    fine = verify_eigen(S, V, E, d, 2 * steps).eigen.max_residual
    ratio = coarse / fine if fine > 0.0 else float("inf")
    logger.info("Step halving %d -> %d: residual %.3e -> %.3e (x%.1f)",
                steps, 2 * steps, coarse, fine, ratio)
    return ratio


def export_axes(axes: Sequence[AxisSolution], directory: Path) -> list[Path]:
    """Write ``axis<k>.csv`` with columns x, psi, dpsi for every axis."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for sol in axes:
        path = directory / f"axis{sol.axis + 1}.csv"
        np.savetxt(
            path,
            np.column_stack([sol.grid, sol.psi, sol.dpsi]),
            delimiter=",",
            header="x,psi,dpsi",
            comments="",
            fmt="%.17g",
        )
        paths.append(path)
    logger.info("Exported %d axis solutions to %s", len(paths), directory)
    return paths
