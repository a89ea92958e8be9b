"""Built-in Stäckel matrix families and the coordinate-rescaling transform."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from staeckelkit.errors import DimensionOutOfRange, DuplicateExponents, NonMonotone
from staeckelkit.exprs import (
    ONE,
    Domain,
    Expr,
    InverseMap,
    Var,
    diff,
    div,
    evaluate_batch,
    evaluate_on_axis,
    log,
    mul,
    parse_expr,
    power,
    substitute,
    substitute_all,
)
from staeckelkit.models import DEFAULT_SAMPLES, DEFAULT_SEED, CheckResult, Residual
from staeckelkit.reporting import timed
from staeckelkit.staeckel import ROW_ALIAS, StaeckelMatrix, determinant, hamiltonians

logger = logging.getLogger(__name__)

MIN_DIM = 2
MAX_DIM = 6
MONOTONE_SAMPLES = 257

FunctionSpec = Expr | str | None


@dataclass(frozen=True)
class GalleryCase:
    """A named Stäckel matrix with its canonical domain."""

    name: str
    matrix: StaeckelMatrix
    domain: Domain
    potential: tuple[Expr, ...] | None = None
    notes: str = ""
    inverse_maps: tuple[Expr, ...] | None = None
    original: GalleryCase | None = None

    @property
    def n(self) -> int:
        return self.matrix.n

    def sample_potential(self) -> tuple[Expr, ...]:
        """The case's potential, or V_i = x_i^2 when it has none."""
        if self.potential is not None:
            return self.potential
        return tuple(power(Var(i), 2) for i in range(self.n))

    def with_domain(self, domain: Domain) -> GalleryCase:
        return replace(self, domain=domain)


def canonical_domain(
    n: int, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED
) -> Domain:
    """Disjoint axis intervals [2i, 2i + 1] (one-based i) keeping f_i(x_i) != f_j(x_j)."""
    return Domain(
        intervals=tuple((2.0 * (i + 1), 2.0 * (i + 1) + 1.0) for i in range(n)),
        samples=samples,
        seed=seed,
    )


def _row_function(spec: FunctionSpec, i: int, n: int) -> Expr:
    if spec is None:
        return Var(i)
    f = parse_expr(spec, n, {ROW_ALIAS: i}) if isinstance(spec, str) else spec
    if f.free_vars - {i}:
        raise ValueError(f"f[{i + 1}] must depend on x{i + 1} only")
    return f


def _row_functions(f: Sequence[FunctionSpec] | FunctionSpec, n: int) -> list[Expr]:
    if f is None or isinstance(f, (str, Expr)):
        if isinstance(f, Expr):
            # one univariate template in x1, copied onto every row
            return [substitute(f, 0, Var(i)) for i in range(n)]
        return [_row_function(f, i, n) for i in range(n)]
    if len(f) != n:
        raise ValueError(f"need {n} row functions, got {len(f)}")
    return [_row_function(spec, i, n) for i, spec in enumerate(f)]


def vandermonde(
    n: int,
    f: Sequence[FunctionSpec] | FunctionSpec = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> GalleryCase:
    """S[i][j] = f_i(x_i)^(n-1-j) (zero-based j); f defaults to the identity.

    Raises:
        DimensionOutOfRange: unless 2 <= n <= 6.
    """
    if not MIN_DIM <= n <= MAX_DIM:
        raise DimensionOutOfRange(f"vandermonde needs {MIN_DIM} <= n <= {MAX_DIM}, got {n}")
    fs = _row_functions(f, n)
    rows = [[power(fs[i], n - 1 - j) for j in range(n)] for i in range(n)]
    return GalleryCase(
        name=f"vandermonde:{n}",
        matrix=StaeckelMatrix.from_rows(rows),
        domain=canonical_domain(n, samples, seed),
        notes="Vandermonde matrix in f_i(x_i)",
    )


def default_exponents(n: int) -> tuple[int, ...]:
    """Distinct exponents 0, 2, 5, 9, ... (k(k+3)/2)."""
    return tuple(k * (k + 3) // 2 for k in range(n))


def power_law(
    n: int,
    gammas: Sequence[int] | None = None,
    f: Sequence[FunctionSpec] | FunctionSpec = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
) -> GalleryCase:
    """S[i][j] = f_i(x_i)^gammas[j]; ``gammas`` lists the column exponents left to right.

    Raises:
        DimensionOutOfRange: unless 2 <= n <= 6.
        DuplicateExponents: if two exponents coincide.
    """
    if not MIN_DIM <= n <= MAX_DIM:
        raise DimensionOutOfRange(f"power_law needs {MIN_DIM} <= n <= {MAX_DIM}, got {n}")
    exponents = tuple(int(g) for g in (gammas if gammas is not None else default_exponents(n)))
    if len(exponents) != n:
        raise ValueError(f"need {n} exponents, got {len(exponents)}")
    if len(set(exponents)) != n:
        raise DuplicateExponents(f"exponents must be distinct, got {list(exponents)}")
    fs = _row_functions(f, n)
    domain = canonical_domain(n, samples, seed)
    if min(exponents) < 0:
        for i, fi in enumerate(fs):
            lo, hi = domain.intervals[i]
            if np.any(evaluate_on_axis(fi, i, np.linspace(lo, hi, MONOTONE_SAMPLES)) <= 0.0):
                raise ValueError(f"f[{i + 1}] must be positive for negative exponents")
    rows = [[power(fs[i], g) for g in exponents] for i in range(n)]
    return GalleryCase(
        name=f"power-law:{n}",
        matrix=StaeckelMatrix.from_rows(rows),
        domain=domain,
        notes=f"power-law matrix with exponents {list(exponents)}",
    )


def identity_case(
    n: int, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED
) -> GalleryCase:
    """S = I on [0, 1]^n."""
    if n < 1:
        raise DimensionOutOfRange(f"identity needs n >= 1, got {n}")
    return GalleryCase(
        name=f"identity:{n}",
        matrix=StaeckelMatrix.identity(n),
        domain=Domain.box(n, 0.0, 1.0, samples=samples, seed=seed),
        notes="identity matrix (flat metric, Cartesian coordinates)",
    )


def _image_interval(f: Expr, i: int, lo: float, hi: float) -> tuple[float, float, float]:
    """(new_lo, new_hi, sign of f') after checking f' keeps one sign on [lo, hi]."""
    slope = evaluate_on_axis(diff(f, i), i, np.linspace(lo, hi, MONOTONE_SAMPLES))
    if np.all(slope > 0.0):
        sign = 1.0
    elif np.all(slope < 0.0):
        sign = -1.0
    else:
        raise NonMonotone(f"f[{i + 1}]' changes sign or vanishes on [{lo}, {hi}]")
    ends = evaluate_on_axis(f, i, np.array([lo, hi]))
    return float(min(ends)), float(max(ends)), sign


def rescale(case: GalleryCase, f: Sequence[FunctionSpec]) -> GalleryCase:
    """Change coordinates to x̂_i = f_i(x_i).

    Row i of the new matrix is S[i][a](g_i(x̂_i)) * g_i'(x̂_i)^2 with g_i the
    inverse of f_i, which keeps the Hamiltonians and multiplies det S by the
    separable factor prod_i g_i'^2. The new domain is the image of the old one.

    Raises:
        NonMonotone: if some f_i' changes sign on its interval.
    """
    n = case.n
    fs = _row_functions(f, n)
    if all(fi == Var(i) for i, fi in enumerate(fs)):
        return case
    inverses: list[Expr] = []
    slopes: list[Expr] = []
    intervals = []
    for i, fi in enumerate(fs):
        lo, hi = case.domain.intervals[i]
        new_lo, new_hi, _ = _image_interval(fi, i, lo, hi)
        intervals.append((new_lo, new_hi))
        g = InverseMap(forward=fi, var=i, argument=Var(i), lo=lo, hi=hi)
        inverses.append(g)
        slopes.append(div(ONE, substitute(diff(fi, i), i, g)))
    rows = [
        [
            mul(substitute(case.matrix[i, j], i, inverses[i]), power(slopes[i], 2))
            for j in range(n)
        ]
        for i in range(n)
    ]
    potential = None
    if case.potential is not None:
        potential = tuple(
            mul(substitute(v, i, inverses[i]), power(slopes[i], 2))
            for i, v in enumerate(case.potential)
        )
    return GalleryCase(
        name=f"{case.name}~rescaled",
        matrix=StaeckelMatrix.from_rows(rows),
        domain=replace(case.domain, intervals=tuple(intervals)),
        potential=potential,
        notes=f"{case.notes}; rescaled by x̂_i = f_i(x_i)",
        inverse_maps=tuple(inverses),
        original=case,
    )


def phi_ratio(original: GalleryCase, rescaled: GalleryCase) -> Expr:
    """det S_new / (det S_old ∘ g), an expression in the new coordinates."""
    if rescaled.inverse_maps is None:
        return ONE
    pulled = substitute_all(determinant(original.matrix), dict(enumerate(rescaled.inverse_maps)))
    return div(determinant(rescaled.matrix), pulled)


@timed("phi-factorization")
def check_phi_factorization(
    original: GalleryCase, rescaled: GalleryCase, tol: float = 1e-8
) -> CheckResult:
    """Mixed second differences of log|phi ratio| vanish when the ratio is a product."""
    d = rescaled.domain
    ratio = log(mul(ratio_sign(original, rescaled), phi_ratio(original, rescaled)))
    widths = d.hi - d.lo
    h = 0.25 * widths
    inner = replace(d, intervals=tuple((lo, hi - hw) for (lo, hi), hw in zip(d.intervals, h)))
    base = inner.points(d.samples)
    residuals = []
    for i in range(d.n):
        for j in range(i + 1, d.n):
            ei = np.zeros(d.n)
            ej = np.zeros(d.n)
            ei[i], ej[j] = h[i], h[j]
            values = [evaluate_batch(ratio, base + shift)[0] for shift in (ei + ej, ei, ej, 0 * ei)]
            mixed = np.abs(values[0] - values[1] - values[2] + values[3])
            k = int(np.nanargmax(mixed))
            residuals.append(
                Residual(f"(x{i + 1},x{j + 1})", float(mixed[k]), [float(v) for v in base[k]])
            )
    return CheckResult.from_residuals("phi-factorization", residuals, tol)


def ratio_sign(original: GalleryCase, rescaled: GalleryCase) -> float:
    """Sign of the phi ratio at the centre of the rescaled domain."""
    centre = 0.5 * (rescaled.domain.lo + rescaled.domain.hi)
    value, valid = evaluate_batch(phi_ratio(original, rescaled), centre)
    return -1.0 if valid[0] and value[0] < 0.0 else 1.0


@timed("metric-density")
def check_metric_density(case: GalleryCase, tol: float = 1e-10) -> CheckResult:
    """|det S| against sqrt|det g| for g^-1 = diag(H^ii of the first Hamiltonian)."""
    phi = determinant(case.matrix)
    first = hamiltonians(case.matrix)[0]
    points = case.domain.points(case.domain.samples)
    phi_vals, _ = evaluate_batch(phi, points)
    inverse_det = np.ones(points.shape[0])
    for c in first.coeff:
        values, _ = evaluate_batch(c, points)
        inverse_det *= values
    density = 1.0 / np.sqrt(np.abs(inverse_det))
    defect = np.abs(np.abs(phi_vals) - density) / np.maximum(1.0, np.abs(phi_vals))
    k = int(np.nanargmax(defect))
    residual = Residual("|phi| - sqrt|det g|", float(defect[k]), [float(v) for v in points[k]])
    return CheckResult.from_residuals("metric-density", [residual], tol)


CUBIC_MAP = "t + t^3/10"


def _vandermonde_cubic(n: int, samples: int, seed: int) -> GalleryCase:
    case = vandermonde(n, CUBIC_MAP, samples, seed)
    return replace(case, name=f"vandermonde-cubic:{n}", notes="Vandermonde matrix in t + t^3/10")


def _rescaled_vandermonde(n: int, samples: int, seed: int) -> GalleryCase:
    base = vandermonde(n, samples=samples, seed=seed)
    return replace(rescale(base, [CUBIC_MAP] * n), name=f"rescaled:{n}")


_FAMILIES: dict[str, tuple[Callable[[int, int, int], GalleryCase], str]] = {
    "identity": (lambda n, s, r: identity_case(n, s, r), "S = I on [0,1]^n"),
    "vandermonde": (lambda n, s, r: vandermonde(n, None, s, r), "Vandermonde, f = t"),
    "vandermonde-cubic": (_vandermonde_cubic, "Vandermonde, f = t + t^3/10"),
    "power-law": (
        lambda n, s, r: power_law(n, None, None, s, r),
        "columns t^0, t^2, t^5, ...",
    ),
    "rescaled": (_rescaled_vandermonde, "Vandermonde rescaled by x -> x + x^3/10"),
}


def list_cases() -> list[tuple[str, str]]:
    """(family, description) pairs; cases are addressed as ``family:N``."""
    return [(name, desc) for name, (_, desc) in _FAMILIES.items()]


def case_by_name(
    name: str, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED
) -> GalleryCase:
    """Resolve ``family:N`` (e.g. ``vandermonde:3``) to a gallery case."""
    family, sep, size = name.partition(":")
    if not sep or family not in _FAMILIES:
        known = ", ".join(_FAMILIES)
        raise ValueError(f"unknown gallery case {name!r}; use family:N with family in {known}")
    try:
        n = int(size)
    except ValueError:
        raise ValueError(f"bad dimension in {name!r}") from None
    builder, _ = _FAMILIES[family]
    return builder(n, samples, seed)


