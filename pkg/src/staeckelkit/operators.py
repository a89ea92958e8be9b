"""Normal-ordered differential operators, quantization and operator-level checks."""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from staeckelkit.errors import OrderOverflow, RowLocalityError, StaeckelError
from staeckelkit.exprs import (
    ONE,
    ZERO,
    Domain,
    Expr,
    add,
    div,
    diff,
    is_zero,
    mul,
    neg,
    partial,
    power,
    scaled_zero_tests,
    simplify,
    sub,
)
from staeckelkit.models import DEFAULT_EPS_DET, DEFAULT_TOL_SECOND, CheckResult, Residual
from staeckelkit.parallel import map_ordered
from staeckelkit.quadrature import (
    QuadratureSpec,
    bump,
    integrate_products,
    scaled_coordinates,
    weight_sign,
)
from staeckelkit.reporting import residual_from, timed
from staeckelkit.staeckel import (
    PhasePoly,
    StaeckelMatrix,
    determinant,
    eq6_expression,
    hamiltonians,
    potentials,
)

logger = logging.getLogger(__name__)

MultiIndex = tuple[int, ...]
ORDER_CAP = 4
DEFAULT_TEST_FUNCTIONS = 20
DEFAULT_TEST_DEGREE = 4


def _unit(n: int, i: int, k: int = 1) -> MultiIndex:
    mi = [0] * n
    mi[i] = k
    return tuple(mi)


def _sub_indices(mu: MultiIndex) -> Iterable[MultiIndex]:
    return itertools.product(*(range(k + 1) for k in mu))


def _multi_binom(mu: MultiIndex, kappa: MultiIndex) -> int:
    return math.prod(math.comb(m, k) for m, k in zip(mu, kappa, strict=True))


@dataclass(frozen=True, eq=False)
class DiffOp:
    """sum over multi-indices mu of terms[mu] * d^mu, coefficients to the left."""

    n: int
    terms: Mapping[MultiIndex, Expr]

    def __post_init__(self) -> None:
        for mi in self.terms:
            if len(mi) != self.n or min(mi, default=0) < 0:
                raise ValueError(f"bad derivative multi-index {mi} for n={self.n}")
        object.__setattr__(self, "terms", MappingProxyType(dict(sorted(self.terms.items()))))

    @classmethod
    def from_parts(cls, n: int, parts: Mapping[MultiIndex, Iterable[Expr]]) -> DiffOp:
        """Sum the coefficient lists per multi-index, dropping structural zeros."""
        terms = {}
        for mi, exprs in parts.items():
            total = add(*exprs)
            if not is_zero(total):
                terms[mi] = total
        return cls(n, terms)

    @classmethod
    def zero(cls, n: int) -> DiffOp:
        return cls(n, {})

    @classmethod
    def identity(cls, n: int) -> DiffOp:
        return cls(n, {(0,) * n: ONE})

    @classmethod
    def multiplication(cls, n: int, f: Expr) -> DiffOp:
        return cls.from_parts(n, {(0,) * n: [f]})

    @classmethod
    def partial(cls, n: int, i: int, k: int = 1) -> DiffOp:
        return cls(n, {_unit(n, i, k): ONE})

    @property
    def order(self) -> int:
        return max((sum(mi) for mi in self.terms), default=0)

    def coefficient(self, mi: MultiIndex) -> Expr:
        return self.terms.get(mi, ZERO)

    def terms_of_order(self, k: int) -> dict[MultiIndex, Expr]:
        return {mi: c for mi, c in self.terms.items() if sum(mi) == k}

    def _combine(self, other: DiffOp, sign: float) -> DiffOp:
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")
        parts: dict[MultiIndex, list[Expr]] = {mi: [c] for mi, c in self.terms.items()}
        for mi, c in other.terms.items():
            parts.setdefault(mi, []).append(c if sign > 0 else neg(c))
        return DiffOp.from_parts(self.n, parts)

    def __add__(self, other: DiffOp) -> DiffOp:
        return self._combine(other, 1.0)

    def __sub__(self, other: DiffOp) -> DiffOp:
        return self._combine(other, -1.0)

    def __neg__(self) -> DiffOp:
        return DiffOp(self.n, {mi: neg(c) for mi, c in self.terms.items()})

    def simplified(self) -> DiffOp:
        """Simplify every coefficient and drop those that became structurally zero."""
        return DiffOp.from_parts(self.n, {mi: [simplify(c)] for mi, c in self.terms.items()})


def apply(op: DiffOp, f: Expr) -> Expr:
    """op(f) = sum_mu c_mu * d^mu f."""
    return add(*(mul(c, partial(f, mu)) for mu, c in op.terms.items()))


def compose(A: DiffOp, B: DiffOp) -> DiffOp:
    """Normal-ordered A∘B by the generalised Leibniz rule.

    a d^mu (b d^nu) = sum_{kappa <= mu} C(mu, kappa) a (d^kappa b) d^(mu - kappa + nu)

    Raises:
        OrderOverflow: if the order of the product would exceed ORDER_CAP.
    """
    if A.n != B.n:
        raise ValueError(f"dimension mismatch: {A.n} vs {B.n}")
    if A.order + B.order > ORDER_CAP:
        raise OrderOverflow(
            f"composition of orders {A.order} and {B.order} exceeds the cap of {ORDER_CAP}"
        )
    parts: dict[MultiIndex, list[Expr]] = {}
    for mu, a in A.terms.items():
        for nu, b in B.terms.items():
            for kappa in _sub_indices(mu):
                db = partial(b, kappa)
                if is_zero(db):
                    continue
                target = tuple(m - k + v for m, k, v in zip(mu, kappa, nu, strict=True))
                parts.setdefault(target, []).append(
                    mul(float(_multi_binom(mu, kappa)), a, db)
                )
    return DiffOp.from_parts(A.n, parts)


def commutator(A: DiffOp, B: DiffOp, simplified: bool = True) -> DiffOp:
    """[A, B] = A∘B - B∘A, coefficients simplified unless ``simplified`` is False."""
    result = compose(A, B) - compose(B, A)
    return result.simplified() if simplified else result


def symbol(op: DiffOp) -> PhasePoly:
    """Principal symbol: the top-order terms with d_i replaced by p_i."""
    top = op.order
    return PhasePoly(op.n, op.terms_of_order(top) if op.terms else {})


def add_potential(op: DiffOp, U: Expr) -> DiffOp:
    """op + U (U added to the order-zero term)."""
    return op + DiffOp.multiplication(op.n, U)


def divergence_form(K: Sequence[Expr], phi: Expr, U: Expr = ZERO) -> DiffOp:
    """Normal order of sum_i (1/phi) d_i (K_i phi d_i .) + U for a diagonal K."""
    n = len(K)
    parts: dict[MultiIndex, list[Expr]] = {(0,) * n: [U]}
    for i, k_i in enumerate(K):
        parts.setdefault(_unit(n, i, 2), []).append(k_i)
        parts.setdefault(_unit(n, i, 1), []).append(div(diff(mul(k_i, phi), i), phi))
    return DiffOp.from_parts(n, parts)


def random_test_polynomials(
    d: Domain,
    count: int = DEFAULT_TEST_FUNCTIONS,
    degree: int = DEFAULT_TEST_DEGREE,
    rng: np.random.Generator | None = None,
    terms: int = 8,
) -> list[Expr]:
    """Random polynomials of total degree <= ``degree`` in centred, scaled coordinates.

    Values and derivatives stay O(1) on ``d`` regardless of where the box sits.
    """
    rng = rng if rng is not None else np.random.default_rng([d.seed, 2])
    u = scaled_coordinates(d)
    monomials = [
        mi for mi in itertools.product(range(degree + 1), repeat=d.n) if sum(mi) <= degree
    ]
    out = []
    for _ in range(count):
        picks = rng.choice(len(monomials), size=min(terms, len(monomials)), replace=False)
        coeffs = rng.uniform(-1.0, 1.0, size=len(picks))
        parts = []
        for pick, c in zip(picks, coeffs, strict=True):
            mi = monomials[int(pick)]
            parts.append(mul(float(c), *(power(u[i], k) for i, k in enumerate(mi) if k)))
        out.append(add(*parts))
    return out


def _application_residual(
    A: DiffOp, B: DiffOp, d: Domain, tol: float, count: int
) -> list[Residual]:
    polys = random_test_polynomials(d, count)
    images = [(apply(A, f), apply(B, f)) for f in polys]
    exprs = [sub(af, bf) for af, bf in images]
    tests = scaled_zero_tests(exprs, [list(pair) for pair in images], d, tol)
    return [residual_from(f"f{k + 1}", [t]) for k, t in enumerate(tests)]


def quantize(
    S: StaeckelMatrix,
    domain: Domain | None = None,
    eps_det: float = DEFAULT_EPS_DET,
    tol: float = DEFAULT_TOL_SECOND,
) -> list[DiffOp]:
    """Ĥ_a = sum_i (cofactor(S, a, i) / det S) d_i^2.

    With a ``domain`` the matrix is sampled for nondegeneracy and each operator
    is compared with its divergence form (1/phi) d_i (H^ii phi d_i .) on random
    test polynomials.

    Raises:
        RowLocalityError: if S is not row-local.
        DegenerateMatrix: if det S is (sampled) too small on ``domain``.
    """
    S.require_row_locality()
    hams = hamiltonians(S, domain, eps_det)
    n = S.n
    ops = [DiffOp.from_parts(n, {_unit(n, i, 2): [h.coeff[i]] for i in range(n)}) for h in hams]
    if domain is not None:
        phi = determinant(S)
        for alpha, (op, h) in enumerate(zip(ops, hams, strict=True)):
            residuals = _application_residual(
                op, divergence_form(h.coeff, phi), domain, tol, DEFAULT_TEST_FUNCTIONS
            )
            worst = max(r.value for r in residuals)
            if worst > tol:
                raise StaeckelError(
                    f"operator {alpha + 1} disagrees with its divergence form "
                    f"(residual {worst:.3e})"
                )
            logger.debug("H%d matches divergence form to %.3e", alpha + 1, worst)
    return ops


def potential_operators(
    S: StaeckelMatrix, V: Sequence[Expr], domain: Domain | None = None
) -> list[DiffOp]:
    """Ȟ_a = Ĥ_a + U_a with U from the row potentials V."""
    ops = quantize(S, domain)
    return [add_potential(op, u) for op, u in zip(ops, potentials(S, V), strict=True)]


def grouped_potential_operators(S: StaeckelMatrix, V: Sequence[Expr]) -> list[DiffOp]:
    """Ȟ_a written as sum_i H^ii_(a) (d_i^2 + V_i)."""
    n = S.n
    out = []
    for h in hamiltonians(S):
        parts: dict[MultiIndex, list[Expr]] = {(0,) * n: []}
        for i in range(n):
            parts[_unit(n, i, 2)] = [h.coeff[i]]
            parts[(0,) * n].append(mul(h.coeff[i], V[i]))
        out.append(DiffOp.from_parts(n, parts))
    return out


def operator_difference_residual(A: DiffOp, B: DiffOp, d: Domain, tol: float) -> CheckResult:
    """Compare two operators by applying both to random test polynomials."""
    residuals = _application_residual(A, B, d, tol, DEFAULT_TEST_FUNCTIONS)
    return CheckResult.from_residuals("operator-equivalence", residuals, tol)


def third_order_defects(S: StaeckelMatrix, alpha: int, beta: int) -> list[Expr]:
    """Third-order coefficients of [Ĥ_a, Ĥ_b] minus (2/phi) d_i[cofactor quotient].

    One expression per (i, j); each vanishes identically.
    """
    ops = quantize(S)
    raw = commutator(ops[alpha], ops[beta], simplified=False)
    phi = determinant(S)
    n = S.n
    out = []
    for i in range(n):
        for j in range(n):
            mi = tuple(a + b for a, b in zip(_unit(n, i), _unit(n, j, 2), strict=True))
            expected = div(mul(2.0, eq6_expression(S, alpha, beta, i, j)), phi)
            out.append(sub(raw.coefficient(mi), expected))
    return out


def _labels(count: int, labels: Sequence[str] | None) -> list[str]:
    return list(labels) if labels is not None else [f"H{k + 1}" for k in range(count)]


def _commutation_check(
    name: str,
    ops: Sequence[DiffOp],
    d: Domain,
    tol: float,
    labels: Sequence[str] | None,
    test_functions: int,
) -> CheckResult:
    names = _labels(len(ops), labels)
    polys = random_test_polynomials(d, test_functions)

    def one(pair: tuple[int, int]) -> tuple[Residual, Residual]:
        a, b = pair
        A, B = ops[a], ops[b]
        AB, BA = compose(A, B), compose(B, A)
        bracket = (AB - BA).simplified()
        keys = list(bracket.terms)
        coefficient_tests = scaled_zero_tests(
            [bracket.terms[m] for m in keys],
            [[AB.coefficient(m), BA.coefficient(m)] for m in keys],
            d,
            tol,
        )
        images = [(apply(A, apply(B, f)), apply(B, apply(A, f))) for f in polys]
        application_tests = scaled_zero_tests(
            [sub(ab, ba) for ab, ba in images], [list(pair) for pair in images], d, tol
        )
        tag = f"[{names[a]},{names[b]}]"
        return (
            residual_from(f"{tag} coefficients", coefficient_tests),
            residual_from(f"{tag} application", application_tests),
        )

    results = map_ordered(one, list(itertools.combinations(range(len(ops)), 2)))
    residuals = [r for pair in results for r in pair]
    coeff_max = max((c.value for c, _ in results), default=0.0)
    app_max = max((a.value for _, a in results), default=0.0)
    message = f"coefficient path {coeff_max:.3e}, application path {app_max:.3e}"
    if (coeff_max <= tol) != (app_max <= tol):
        logger.warning("%s: coefficient and application paths disagree (%s)", name, message)
    return CheckResult.from_residuals(name, residuals, tol, message)


@timed("commute")
def check_commutation(
    ops: Sequence[DiffOp],
    d: Domain,
    tol: float,
    labels: Sequence[str] | None = None,
    test_functions: int = DEFAULT_TEST_FUNCTIONS,
) -> CheckResult:
    """Dual-path commutation check for every pair of operators.

    The coefficient path zero-tests the coefficients of [A, B]; the application
    path zero-tests A(B f) - B(A f) for random polynomials f of degree <= 4.
    """
    return _commutation_check("commute", ops, d, tol, labels, test_functions)


@timed("commute-potential")
def check_potential_commutation(
    S: StaeckelMatrix, V: Sequence[Expr], d: Domain, tol: float
) -> CheckResult:
    """Commutation of Ĥ_a + U_a built from the row potentials V."""
    bad = S.row_locality_violations()
    if bad:
        return CheckResult.error("commute-potential", str(RowLocalityError(bad)), tol)
    ops = potential_operators(S, V, d)
    labels = [f"H{k + 1}+U{k + 1}" for k in range(S.n)]
    return _commutation_check(
        "commute-potential", ops, d, tol, labels, DEFAULT_TEST_FUNCTIONS
    )


def bump_test_pairs(d: Domain, quad: QuadratureSpec) -> list[tuple[Expr, Expr]]:
    """(f, h) pairs of bump times a random polynomial of degree ``quad.degree``."""
    b = bump(d)
    rng = np.random.default_rng([d.seed, 3])
    polys = random_test_polynomials(d, 2 * quad.pairs, quad.degree, rng=rng, terms=4)
    return [(mul(b, polys[2 * k]), mul(b, polys[2 * k + 1])) for k in range(quad.pairs)]


@timed("selfadjoint")
def check_self_adjoint(
    op: DiffOp,
    phi: Expr,
    d: Domain,
    quad: QuadratureSpec | None = None,
    tol: float = 1e-6,
    pairs: Sequence[tuple[Expr, Expr]] | None = None,
    label: str = "H",
) -> CheckResult:
    """Max |<op f, h>_phi - <f, op h>_phi| over bump test pairs, by quadrature.

    Raises:
        QuadratureFailure: if phi changes sign on ``d``.
    """
    if op.order > 2:
        raise ValueError(f"self-adjointness check needs order <= 2, got {op.order}")
    quad = quad or QuadratureSpec()
    sign = weight_sign(phi, d, quad.nodes)
    weight = phi if sign > 0 else neg(phi)
    test_pairs = list(pairs) if pairs is not None else bump_test_pairs(d, quad)
    products = []
    for f, h in test_pairs:
        products.append((apply(op, f), h))
        products.append((f, apply(op, h)))
    integrals = integrate_products(products, weight, d, quad.nodes)
    residuals = [
        Residual(f"{label} pair {k + 1}", abs(integrals[2 * k] - integrals[2 * k + 1]))
        for k in range(len(test_pairs))
    ]
    return CheckResult.from_residuals("selfadjoint", residuals, tol)
