"""Stäckel matrices, classical Hamiltonians, Poisson brackets and classical checks.

Indices are zero-based in the API and one-based in labels and messages. The
cofactor convention is fixed by the reconstruction identity S·H = P:
``cofactor(S, a, i)`` is entry (a, i) of the adjugate of S, so that

    H_a = sum_i cofactor(S, a, i) / det(S) * p_i**2

solves sum_a S[i][a] * H_a = p_i**2.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from types import MappingProxyType

import numpy as np
import numpy.typing as npt

from staeckelkit.errors import DegenerateMatrix, DomainTooSingular, RowLocalityError
from staeckelkit.exprs import (
    ONE,
    ZERO,
    Domain,
    Expr,
    FloatArray,
    add,
    as_expr,
    diff,
    div,
    evaluate_batch,
    evaluate_batch_many,
    is_zero,
    mul,
    neg,
    parse_expr,
    power,
    scaled_zero_tests,
    simplify,
    sub,
    valid_sample,
    zero_tests,
)
from staeckelkit.models import DEFAULT_EPS_DET, CheckResult, Residual
from staeckelkit.parallel import map_ordered
from staeckelkit.reporting import residual_from, timed

logger = logging.getLogger(__name__)

MultiIndex = tuple[int, ...]
ROW_ALIAS = "t"


class _MinorTable:
    """Memoised Laplace expansion of sub-determinants of a symbolic matrix."""

    def __init__(self, entries: tuple[tuple[Expr, ...], ...]) -> None:
        self._entries = entries
        self._memo: dict[tuple[tuple[int, ...], tuple[int, ...]], Expr] = {}

    def det(self, rows: tuple[int, ...], cols: tuple[int, ...]) -> Expr:
        if not rows:
            return ONE
        key = (rows, cols)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        first, rest = rows[0], rows[1:]
        terms = []
        for k, col in enumerate(cols):
            entry = self._entries[first][col]
            if is_zero(entry):
                continue
            term = mul(entry, self.det(rest, cols[:k] + cols[k + 1 :]))
            terms.append(neg(term) if k % 2 else term)
        result = add(*terms)
        self._memo[key] = result
        return result


@dataclass(frozen=True)
class StaeckelMatrix:
    """An n×n matrix of expressions; row i may depend on ``x_i`` only.

    Construction does not enforce row-locality so that corrupted matrices can
    be reported by the checks; use :meth:`require_row_locality` to enforce it.
    """

    entries: tuple[tuple[Expr, ...], ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(as_expr(e) for e in row) for row in self.entries)
        if not rows or any(len(row) != len(rows) for row in rows):
            raise ValueError("a Stäckel matrix must be square and non-empty")
        object.__setattr__(self, "entries", rows)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Expr | float]]) -> StaeckelMatrix:
        return cls(tuple(tuple(as_expr(e) for e in row) for row in rows))

    @classmethod
    def from_strings(cls, rows: Sequence[Sequence[str]]) -> StaeckelMatrix:
        """Parse DSL entries; row i may write its coordinate as ``x<i>`` or ``t``."""
        n = len(rows)
        return cls(
            tuple(
                tuple(parse_expr(text, n, {ROW_ALIAS: i}) for text in row)
                for i, row in enumerate(rows)
            )
        )

    @classmethod
    def identity(cls, n: int) -> StaeckelMatrix:
        return cls(tuple(tuple(ONE if i == j else ZERO for j in range(n)) for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: tuple[int, int]) -> Expr:
        i, j = index
        return self.entries[i][j]

    def row_locality_violations(self) -> list[tuple[int, int]]:
        """Entries (i, j) whose expression mentions a variable other than x_i."""
        return [
            (i, j)
            for i, row in enumerate(self.entries)
            for j, entry in enumerate(row)
            if entry.free_vars - {i}
        ]

    def require_row_locality(self) -> None:
        bad = self.row_locality_violations()
        if bad:
            raise RowLocalityError(bad)

    def evaluate(self, points: npt.ArrayLike) -> FloatArray:
        """Numeric matrices at each point, shaped (m, n, n); NaN where undefined."""
        flat = [e for row in self.entries for e in row]
        values, _ = evaluate_batch_many(flat, points)
        return values.T.reshape(-1, self.n, self.n)

    @cached_property
    def _minors(self) -> _MinorTable:
        return _MinorTable(self.entries)


def determinant(S: StaeckelMatrix) -> Expr:
    """φ = det S by Laplace expansion along successive rows."""
    return S._minors.det(tuple(range(S.n)), tuple(range(S.n)))


def cofactor(S: StaeckelMatrix, alpha: int, i: int) -> Expr:
    """Adjugate entry (alpha, i): (-1)^(i+alpha) times the minor without row i, column alpha.

    The result never mentions ``x_i`` when S is row-local.
    """
    rows = tuple(r for r in range(S.n) if r != i)
    cols = tuple(c for c in range(S.n) if c != alpha)
    minor = S._minors.det(rows, cols)
    return neg(minor) if (i + alpha) % 2 else minor


def check_nondegenerate(S: StaeckelMatrix, d: Domain, eps_det: float = DEFAULT_EPS_DET) -> float:
    """Sample |det S| on ``d``; returns its minimum.

    Raises:
        DegenerateMatrix: if |det S| < eps_det at a sampled point.
        DomainTooSingular: if det S cannot be evaluated at most points.
    """
    phi = determinant(S)
    points = d.points(d.samples)
    values, valid = evaluate_batch(phi, points)
    if valid.sum() < 0.1 * len(valid):
        raise DomainTooSingular("det S is undefined at most sample points")
    magnitudes = np.where(valid, np.abs(values), np.inf)
    k = int(np.argmin(magnitudes))
    smallest = float(magnitudes[k])
    if smallest < eps_det:
        raise DegenerateMatrix(
            f"|det S| = {smallest:.3e} < {eps_det:.1e}",
            witness=[float(v) for v in points[k]],
        )
    logger.debug("min |det S| on %d samples: %.3e", len(points), smallest)
    return smallest


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hamiltonian:
    """H = sum_i coeff[i] * p_i**2 + potential."""

    coeff: tuple[Expr, ...]
    potential: Expr = ZERO

    @classmethod
    def potential_only(cls, n: int, potential: Expr) -> Hamiltonian:
        return cls(tuple(ZERO for _ in range(n)), potential)

    @property
    def n(self) -> int:
        return len(self.coeff)

    def with_potential(self, potential: Expr) -> Hamiltonian:
        return Hamiltonian(self.coeff, potential)

    def evaluate(self, x: npt.ArrayLike, p: npt.ArrayLike) -> FloatArray:
        """Numeric H at phase points; x and p are (m, n) arrays."""
        values, _ = evaluate_batch_many([*self.coeff, self.potential], x)
        momenta = np.asarray(p, dtype=float).reshape(values.shape[1], self.n)
        result: FloatArray = np.einsum("im,mi->m", values[: self.n], momenta**2)
        return result + values[self.n]


def hamiltonians(
    S: StaeckelMatrix, domain: Domain | None = None, eps_det: float = DEFAULT_EPS_DET
) -> list[Hamiltonian]:
    """The n Hamiltonians H_a with coefficients cofactor(S, a, i) / det S.

    When ``domain`` is given, nondegeneracy is sampled first.
    """
    if domain is not None:
        check_nondegenerate(S, domain, eps_det)
    phi = determinant(S)
    return [
        Hamiltonian(tuple(div(cofactor(S, alpha, i), phi) for i in range(S.n)))
        for alpha in range(S.n)
    ]


def _check_potential_rows(V: Sequence[Expr], n: int) -> None:
    if len(V) != n:
        raise ValueError(f"need {n} potential functions, got {len(V)}")
    for i, v in enumerate(V):
        if v.free_vars - {i}:
            raise ValueError(f"V[{i + 1}] must depend on x{i + 1} only")


def potentials(
    S: StaeckelMatrix,
    V: Sequence[Expr],
    domain: Domain | None = None,
    eps_det: float = DEFAULT_EPS_DET,
) -> list[Expr]:
    """U_a = sum_i cofactor(S, a, i) * V_i / det S, so that S·U = V."""
    _check_potential_rows(V, S.n)
    if domain is not None:
        check_nondegenerate(S, domain, eps_det)
    phi = determinant(S)
    out = []
    for alpha in range(S.n):
        terms = [mul(cofactor(S, alpha, i), V[i]) for i in range(S.n) if not is_zero(V[i])]
        out.append(div(add(*terms), phi) if terms else ZERO)
    return out


def with_potentials(
    S: StaeckelMatrix, V: Sequence[Expr], domain: Domain | None = None
) -> list[Hamiltonian]:
    """Hamiltonians H_a + U_a built from the row potentials V."""
    hams = hamiltonians(S, domain)
    return [h.with_potential(u) for h, u in zip(hams, potentials(S, V), strict=True)]


# ---------------------------------------------------------------------------
# Phase-space polynomials and Poisson brackets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PhasePoly:
    """Polynomial in the momenta with expression coefficients in x."""

    n: int
    terms: Mapping[MultiIndex, Expr]

    def __post_init__(self) -> None:
        for mi in self.terms:
            if len(mi) != self.n or min(mi) < 0:
                raise ValueError(f"bad momentum multi-index {mi} for n={self.n}")
        object.__setattr__(self, "terms", MappingProxyType(dict(self.terms)))

    @classmethod
    def from_parts(cls, n: int, parts: Mapping[MultiIndex, Iterable[Expr]]) -> PhasePoly:
        """Sum the expression lists per multi-index, dropping structural zeros."""
        terms = {}
        for mi in sorted(parts):
            total = add(*parts[mi])
            if not is_zero(total):
                terms[mi] = total
        return cls(n, terms)

    def coefficient(self, mi: MultiIndex) -> Expr:
        return self.terms.get(mi, ZERO)

    @property
    def degree(self) -> int:
        return max((sum(mi) for mi in self.terms), default=0)

    def is_structurally_zero(self) -> bool:
        return not self.terms

    def simplified(self) -> PhasePoly:
        return PhasePoly.from_parts(self.n, {mi: [simplify(c)] for mi, c in self.terms.items()})

    def __add__(self, other: PhasePoly) -> PhasePoly:
        parts: dict[MultiIndex, list[Expr]] = {}
        for poly in (self, other):
            for mi, c in poly.terms.items():
                parts.setdefault(mi, []).append(c)
        return PhasePoly.from_parts(self.n, parts)

    def evaluate(self, x: npt.ArrayLike, p: npt.ArrayLike) -> FloatArray:
        """Numeric value at phase points; x and p are (m, n) arrays."""
        xs = np.asarray(x, dtype=float).reshape(-1, self.n)
        ps = np.asarray(p, dtype=float).reshape(-1, self.n)
        if not self.terms:
            return np.zeros(xs.shape[0])
        keys = sorted(self.terms)
        values, _ = evaluate_batch_many([self.terms[k] for k in keys], xs)
        monomials = np.array([np.prod(ps ** np.array(k), axis=1) for k in keys])
        result: FloatArray = np.sum(values * monomials, axis=0)
        return result


def _unit(n: int, *pairs: tuple[int, int]) -> MultiIndex:
    mi = [0] * n
    for index, k in pairs:
        mi[index] += k
    return tuple(mi)


def poisson_bracket(H: Hamiltonian, F: Hamiltonian) -> PhasePoly:
    """Exact bracket {H, F} = sum_i (dH/dp_i dF/dx_i - dH/dx_i dF/dp_i).

    For H = sum a_i p_i^2 + U and F = sum b_i p_i^2 + W the result has
    coefficient 2(a_i d_i b_k - b_i d_i a_k) at p_i p_k^2 and
    2(a_i d_i W - b_i d_i U) at p_i.
    """
    if H.n != F.n:
        raise ValueError(f"dimension mismatch: {H.n} vs {F.n}")
    n = H.n
    parts: dict[MultiIndex, list[Expr]] = {}
    for i in range(n):
        a_i, b_i = H.coeff[i], F.coeff[i]
        for k in range(n):
            term = sub(mul(a_i, diff(F.coeff[k], i)), mul(b_i, diff(H.coeff[k], i)))
            parts.setdefault(_unit(n, (i, 1), (k, 2)), []).append(mul(2.0, term))
        term = sub(mul(a_i, diff(F.potential, i)), mul(b_i, diff(H.potential, i)))
        parts.setdefault(_unit(n, (i, 1)), []).append(mul(2.0, term))
    return PhasePoly.from_parts(n, parts)


def bracket_scale_terms(H: Hamiltonian, F: Hamiltonian) -> dict[MultiIndex, list[Expr]]:
    """The products summed into each coefficient of {H, F}, keyed by monomial."""
    if H.n != F.n:
        raise ValueError(f"dimension mismatch: {H.n} vs {F.n}")
    n = H.n
    scales: dict[MultiIndex, list[Expr]] = {}
    for i in range(n):
        a_i, b_i = H.coeff[i], F.coeff[i]
        for k in range(n):
            scales.setdefault(_unit(n, (i, 1), (k, 2)), []).extend(
                (mul(2.0, mul(a_i, diff(F.coeff[k], i))), mul(2.0, mul(b_i, diff(H.coeff[k], i))))
            )
        scales.setdefault(_unit(n, (i, 1)), []).extend(
            (mul(2.0, mul(a_i, diff(F.potential, i))), mul(2.0, mul(b_i, diff(H.potential, i))))
        )
    return scales


def poisson_bracket_fd(
    H: Hamiltonian, F: Hamiltonian, x: npt.ArrayLike, p: npt.ArrayLike, h: float = 1e-5
) -> FloatArray:
    """Central finite-difference bracket at phase points, the oracle for poisson_bracket."""
    xs = np.asarray(x, dtype=float)
    ps = np.asarray(p, dtype=float)
    total = np.zeros(xs.shape[0])
    for i in range(H.n):
        step = np.zeros(H.n)
        step[i] = h

        def dx(G: Hamiltonian) -> FloatArray:
            return (G.evaluate(xs + step, ps) - G.evaluate(xs - step, ps)) / (2 * h)

        def dp(G: Hamiltonian) -> FloatArray:
            return (G.evaluate(xs, ps + step) - G.evaluate(xs, ps - step)) / (2 * h)

        total += dp(H) * dx(F) - dx(H) * dp(F)
    return total


# ---------------------------------------------------------------------------
# Classical checks
# ---------------------------------------------------------------------------


def _pairs(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


@timed("reconstruction")
def check_reconstruction(
    S: StaeckelMatrix, d: Domain, tol: float = 1e-10, hams: Sequence[Hamiltonian] | None = None
) -> CheckResult:
    """Sample sum_a S[i][a] H_a - p_i^2 at random (x, p) with |p| <= 1."""
    hams = list(hams) if hams is not None else hamiltonians(S)
    n = S.n
    entries = [e for row in S.entries for e in row]
    coeffs = [c for h in hams for c in h.coeff]
    points, values = valid_sample(entries + coeffs, d)
    m = points.shape[0]
    s_vals = values[: n * n].reshape(n, n, m)
    h_vals = values[n * n :].reshape(n, n, m)
    rng = np.random.default_rng([d.seed, 1])
    p = rng.uniform(-1.0, 1.0, size=(m, n))
    p /= np.maximum(1.0, np.linalg.norm(p, axis=1))[:, None]
    h_num = np.einsum("akm,mk->am", h_vals, p**2)
    lhs = np.einsum("iam,am->im", s_vals, h_num)
    defect = np.abs(lhs - (p**2).T)
    residuals = []
    for i in range(n):
        k = int(np.argmax(defect[i]))
        witness = [float(v) for v in np.concatenate([points[k], p[k]])]
        residuals.append(Residual(f"row {i + 1}", float(defect[i, k]), witness))
    return CheckResult.from_residuals("reconstruction", residuals, tol)


@timed("involution")
def check_involution(
    S: StaeckelMatrix,
    d: Domain,
    tol: float,
    V: Sequence[Expr] | None = None,
    eps_det: float = DEFAULT_EPS_DET,
) -> CheckResult:
    """Zero-test every coefficient of {H_a, H_b} for a < b.

    With row potentials ``V`` the Hamiltonians carry U_a. Coefficients are relative to
    the products they sum (see :func:`bracket_scale_terms`) with a floor of 1.
    Row-locality violations are reported as an error result before any bracket is formed.
    """
    bad = S.row_locality_violations()
    if bad:
        return CheckResult.error("involution", str(RowLocalityError(bad)), tol)
    hams = with_potentials(S, V, d) if V is not None else hamiltonians(S, d, eps_det)
    return _involution_of(hams, d, tol)


def _involution_of(hams: Sequence[Hamiltonian], d: Domain, tol: float) -> CheckResult:
    def one(pair: tuple[int, int]) -> Residual:
        a, b = pair
        bracket = poisson_bracket(hams[a], hams[b])
        scales = bracket_scale_terms(hams[a], hams[b])
        keys = list(bracket.terms)
        tests = scaled_zero_tests(
            [bracket.terms[m] for m in keys], [scales.get(m, []) for m in keys], d, tol
        )
        return residual_from(f"{{H{a + 1},H{b + 1}}}", tests)

    residuals = map_ordered(one, _pairs(len(hams)))
    return CheckResult.from_residuals("involution", residuals, tol)


def eq6_quotient(S: StaeckelMatrix, alpha: int, beta: int, i: int, j: int) -> Expr:
    """(D_ai D_bj - D_aj D_bi) / det S, the 2×2 cofactor-minor quotient."""
    num = sub(
        mul(cofactor(S, alpha, i), cofactor(S, beta, j)),
        mul(cofactor(S, alpha, j), cofactor(S, beta, i)),
    )
    return div(num, determinant(S))


def eq6_expression(S: StaeckelMatrix, alpha: int, beta: int, i: int, j: int) -> Expr:
    """d_i of :func:`eq6_quotient`; vanishes identically for a Stäckel matrix."""
    return diff(eq6_quotient(S, alpha, beta, i, j), i)


def eq6_scale_terms(S: StaeckelMatrix, alpha: int, beta: int, i: int, j: int) -> list[Expr]:
    """Quotient-rule terms of both cofactor products, before they cancel.

    d_i(P/phi) = d_i P / phi - P d_i phi / phi^2 for P = D_ai D_bj and P = D_aj D_bi.
    """
    phi = determinant(S)
    d_phi = diff(phi, i)
    products = (
        mul(cofactor(S, alpha, i), cofactor(S, beta, j)),
        mul(cofactor(S, alpha, j), cofactor(S, beta, i)),
    )
    terms: list[Expr] = []
    for P in products:
        terms.append(div(diff(P, i), phi))
        terms.append(div(mul(P, d_phi), power(phi, 2)))
    return terms


@timed("eq6")
def check_identity_eq6(S: StaeckelMatrix, d: Domain, tol: float) -> CheckResult:
    """Zero-test d_i[(D_ai D_bj - D_aj D_bi)/phi] over all a < b and all i, j.

    Residuals are relative to the quotient-rule terms (see :func:`eq6_scale_terms`)
    with a floor of 1.
    """
    bad = S.row_locality_violations()
    if bad:
        return CheckResult.error("eq6", str(RowLocalityError(bad)), tol)
    n = S.n
    tuples = [(a, b, i, j) for a, b in _pairs(n) for i in range(n) for j in range(n)]
    exprs = [eq6_expression(S, *t) for t in tuples]
    scales = [eq6_scale_terms(S, *t) for t in tuples]
    tests = scaled_zero_tests(exprs, scales, d, tol)
    residuals = [
        residual_from("({},{},{},{})".format(*(k + 1 for k in t)), [test])
        for t, test in zip(tuples, tests, strict=True)
    ]
    return CheckResult.from_residuals("eq6", residuals, tol)


def benenti_expression(H_a: Hamiltonian, H_b: Hamiltonian, s: int) -> Expr:
    """H_a^{ss} d_s U_b - H_b^{ss} d_s U_a."""
    return sub(
        mul(H_a.coeff[s], diff(H_b.potential, s)),
        mul(H_b.coeff[s], diff(H_a.potential, s)),
    )


@timed("benenti")
def check_benenti(H_a: Hamiltonian, H_b: Hamiltonian, d: Domain, tol: float) -> CheckResult:
    """Zero-test the compatibility condition between the potentials of two Hamiltonians."""
    exprs = [benenti_expression(H_a, H_b, s) for s in range(H_a.n)]
    tests = zero_tests(exprs, d, tol)
    residuals = [residual_from(f"s={s + 1}", [t]) for s, t in enumerate(tests)]
    return CheckResult.from_residuals("benenti", residuals, tol)


@timed("benenti")
def check_benenti_all(hams: Sequence[Hamiltonian], d: Domain, tol: float) -> CheckResult:
    """Benenti condition for every pair a < b of potential-carrying Hamiltonians."""
    n = len(hams)
    labels = []
    exprs = []
    for a, b in _pairs(n):
        for s in range(n):
            labels.append(f"(H{a + 1},H{b + 1}) s={s + 1}")
            exprs.append(benenti_expression(hams[a], hams[b], s))
    tests = zero_tests(exprs, d, tol)
    residuals = [residual_from(lab, [t]) for lab, t in zip(labels, tests, strict=True)]
    return CheckResult.from_residuals("benenti", residuals, tol)
