"""Tests for differential operators, quantization and the operator-level checks."""

from __future__ import annotations

import pytest

from staeckelkit.errors import OrderOverflow, QuadratureFailure, RowLocalityError
from staeckelkit.exprs import (
    ONE,
    Constant,
    Domain,
    Var,
    add,
    evaluate,
    mul,
    parse_expr,
    power,
    sin,
    zero_tests,
)
from staeckelkit.gallery import GalleryCase, case_by_name
from staeckelkit.models import CheckStatus
from staeckelkit.operators import (
    DiffOp,
    add_potential,
    apply,
    check_commutation,
    check_potential_commutation,
    check_self_adjoint,
    commutator,
    compose,
    divergence_form,
    grouped_potential_operators,
    operator_difference_residual,
    potential_operators,
    quantize,
    random_test_polynomials,
    symbol,
    third_order_defects,
)
from staeckelkit.quadrature import QuadratureSpec, bump
from staeckelkit.staeckel import StaeckelMatrix, determinant, hamiltonians

x1, x2 = Var(0), Var(1)

GALLERY_SUITE = [
    "identity:2",
    "identity:3",
    "identity:4",
    "vandermonde:2",
    "vandermonde:3",
    "vandermonde:4",
    "vandermonde-cubic:2",
    "vandermonde-cubic:3",
    "vandermonde-cubic:4",
    "power-law:3",
]


# ---------------------------------------------------------------------------
# Operator algebra
# ---------------------------------------------------------------------------


class TestDiffOp:
    def test_leibniz_rule(self) -> None:
        op = compose(DiffOp.partial(2, 0, 2), DiffOp.multiplication(2, x1))
        assert dict(op.terms) == {(1, 0): Constant(2.0), (2, 0): x1}

    def test_commutator_with_coordinate(self) -> None:
        result = commutator(DiffOp.partial(2, 0, 2), DiffOp.multiplication(2, x1))
        assert dict(result.terms) == {(1, 0): Constant(2.0)}

    def test_partials_commute(self) -> None:
        result = commutator(DiffOp.partial(2, 0, 2), DiffOp.partial(2, 1, 1))
        assert not result.terms

    def test_order_cap(self) -> None:
        with pytest.raises(OrderOverflow):
            compose(DiffOp.partial(2, 0, 3), DiffOp.partial(2, 1, 2))

    def test_order_and_zero(self) -> None:
        assert DiffOp.partial(3, 2, 2).order == 2
        assert DiffOp.zero(3).order == 0
        assert DiffOp.identity(2).coefficient((0, 0)) == ONE

    def test_bad_multi_index(self) -> None:
        with pytest.raises(ValueError):
            DiffOp(2, {(1, 0, 0): ONE})

    def test_apply(self) -> None:
        result = apply(DiffOp.partial(1, 0, 2), power(x1, 3))
        assert evaluate(result, [2.0]) == 12.0

    def test_composition_is_associative(self, unit_square: Domain) -> None:
        A = DiffOp(2, {(1, 0): x2})
        B = DiffOp(2, {(0, 1): x1, (0, 0): ONE})
        C = DiffOp(2, {(1, 0): sin(x1), (0, 1): mul(x1, x2)})
        left = compose(compose(A, B), C)
        right = compose(A, compose(B, C))
        result = operator_difference_residual(left, right, unit_square, 1e-10)
        assert result.status is CheckStatus.PASS

    def test_composition_matches_nested_application(self, unit_square: Domain) -> None:
        A = DiffOp(2, {(0, 2): x1, (1, 0): ONE})
        B = DiffOp(2, {(1, 1): x2})
        f = parse_expr("sin(x1)*x2^3 + x1^2", 2)
        nested = apply(A, apply(B, f))
        composed = apply(compose(A, B), f)
        point = [0.3, 0.7]
        assert evaluate(composed, point) == pytest.approx(evaluate(nested, point), rel=1e-10)

    def test_add_and_subtract(self) -> None:
        A = DiffOp(2, {(1, 0): x1})
        assert not (A - A).simplified().terms
        assert dict((A + A).simplified().terms) == {(1, 0): mul(2.0, x1)}


def test_random_test_polynomials_are_seeded(unit_square: Domain) -> None:
    first = random_test_polynomials(unit_square, 5)
    second = random_test_polynomials(unit_square, 5)
    assert first == second
    assert len(first) == 5


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------


class TestQuantize:
    def test_symbol_matches_hamiltonian(self, vandermonde2: GalleryCase) -> None:
        ops = quantize(vandermonde2.matrix)
        for op, h in zip(ops, hamiltonians(vandermonde2.matrix), strict=True):
            sym = symbol(op)
            assert op.order == 2
            assert sym.coefficient((2, 0)) == h.coeff[0]
            assert sym.coefficient((0, 2)) == h.coeff[1]

    def test_matches_divergence_form(self, vandermonde3: GalleryCase) -> None:
        # raises if any operator differs from its divergence form
        ops = quantize(vandermonde3.matrix, vandermonde3.domain)
        assert len(ops) == 3

    def test_divergence_form_of_flat_laplacian(self) -> None:
        op = divergence_form([ONE, ONE], ONE)
        assert dict(op.terms) == {(2, 0): ONE, (0, 2): ONE}

    def test_requires_row_locality(self) -> None:
        S = StaeckelMatrix.from_strings([["x1", "x2"], ["x2", "1"]])
        with pytest.raises(RowLocalityError):
            quantize(S)

    def test_grouped_form_agrees(self, vandermonde2: GalleryCase) -> None:
        V = vandermonde2.sample_potential()
        expanded = potential_operators(vandermonde2.matrix, V)
        grouped = grouped_potential_operators(vandermonde2.matrix, V)
        for A, B in zip(expanded, grouped, strict=True):
            result = operator_difference_residual(A, B, vandermonde2.domain, 1e-9)
            assert result.status is CheckStatus.PASS

    def test_third_order_commutator_terms(self, vandermonde3: GalleryCase) -> None:
        defects = third_order_defects(vandermonde3.matrix, 0, 1)
        assert len(defects) == 9
        tests = zero_tests(defects, vandermonde3.domain, 1e-8)
        assert all(t.verdict for t in tests)


# ---------------------------------------------------------------------------
# Commutation
# ---------------------------------------------------------------------------


class TestCommutation:
    def test_quantized_operators_commute(self, vandermonde3: GalleryCase) -> None:
        ops = quantize(vandermonde3.matrix)
        result = check_commutation(ops, vandermonde3.domain, 1e-8)
        assert result.status is CheckStatus.PASS
        assert result.residuals[0].label == "[H1,H2] coefficients"
        assert result.residuals[1].label == "[H1,H2] application"
        assert "application path" in result.message

    def test_with_potential(self, power_law3: GalleryCase) -> None:
        result = check_potential_commutation(
            power_law3.matrix, power_law3.sample_potential(), power_law3.domain, 1e-8
        )
        assert result.status is CheckStatus.PASS

    def test_coupling_potential_breaks_commutation(self, identity2: GalleryCase) -> None:
        h1, h2 = quantize(identity2.matrix)
        # [d1^2 + x1 x2, d2^2] = -2 x1 d2
        result = check_commutation(
            [add_potential(h1, mul(x1, x2)), h2], identity2.domain, 1e-8
        )
        assert result.status is CheckStatus.FAIL
        # relative to the 2 x1 d2 term of H2 H1, so 1 wherever 2 x1 >= 1
        assert result.max_residual == pytest.approx(1.0)
        assert result.witness is not None

    def test_coupling_potential_on_vandermonde(self, vandermonde2: GalleryCase) -> None:
        h1, h2 = quantize(vandermonde2.matrix)
        result = check_commutation(
            [add_potential(h1, mul(x1, x2)), h2], vandermonde2.domain, 1e-8
        )
        assert result.status is CheckStatus.FAIL
        coefficients = result.residuals[0]
        assert coefficients.label == "[H1,H2] coefficients"
        assert coefficients.value >= 1e-2
        assert coefficients.witness is not None
        assert len(coefficients.witness) == 2

    def test_potential_check_reports_row_locality(self) -> None:
        S = StaeckelMatrix.from_strings([["x1", "x2"], ["x2", "1"]])
        result = check_potential_commutation(S, [x1, x2], Domain.box(2, 2.0, 3.0), 1e-8)
        assert result.status is CheckStatus.ERROR

    @pytest.mark.parametrize("name", GALLERY_SUITE)
    def test_gallery_operators_commute(self, name: str) -> None:
        case = case_by_name(name)
        result = check_commutation(quantize(case.matrix), case.domain, 1e-8)
        assert result.status is CheckStatus.PASS, result.message
        coefficient_path = [r for r in result.residuals if r.label.endswith("coefficients")]
        application_path = [r for r in result.residuals if r.label.endswith("application")]
        assert len(coefficient_path) == len(application_path) == case.n * (case.n - 1) // 2
        assert max(r.value for r in coefficient_path) <= 1e-8
        assert max(r.value for r in application_path) <= 1e-8


# ---------------------------------------------------------------------------
# Self-adjointness
# ---------------------------------------------------------------------------


class TestSelfAdjoint:
    def test_quantized_operators_are_symmetric(self, vandermonde2: GalleryCase) -> None:
        S = vandermonde2.matrix
        phi = determinant(S)
        for k, op in enumerate(quantize(S)):
            label = f"H{k + 1}"
            result = check_self_adjoint(op, phi, vandermonde2.domain, tol=1e-6, label=label)
            assert result.status is CheckStatus.PASS, label
            assert result.max_residual <= 1e-6
            assert result.residuals[0].label == f"{label} pair 1"

    def test_negative_weight_is_flipped(self) -> None:
        d = Domain.box(1, -1.0, 1.0)
        op = DiffOp.partial(1, 0, 2)
        result = check_self_adjoint(op, Constant(-2.0), d, QuadratureSpec(pairs=2), tol=1e-5)
        assert result.status is CheckStatus.PASS

    def test_wrong_weight_detected(self) -> None:
        d = Domain.box(1, -1.0, 1.0)
        b = bump(d)
        op = DiffOp.partial(1, 0, 2)
        # <f'', h> - <f, h''> with weight e^x leaves the integral of b^2 e^x
        result = check_self_adjoint(
            op, parse_expr("exp(x1)", 1), d, pairs=[(b, mul(x1, b))], tol=1e-6
        )
        assert result.status is CheckStatus.FAIL
        assert result.max_residual > 0.1

    def test_sign_changing_weight(self) -> None:
        with pytest.raises(QuadratureFailure):
            check_self_adjoint(DiffOp.partial(1, 0, 2), x1, Domain.box(1, -1.0, 1.0))

    def test_rejects_higher_order(self) -> None:
        with pytest.raises(ValueError, match="order"):
            check_self_adjoint(DiffOp.partial(1, 0, 3), ONE, Domain.box(1, 0.0, 1.0))

    def test_label(self) -> None:
        d = Domain.box(1, -1.0, 1.0)
        op = add_potential(DiffOp.partial(1, 0, 2), add(1.0, x1))
        result = check_self_adjoint(op, ONE, d, QuadratureSpec(pairs=1), tol=1e-5, label="H3")
        assert [r.label for r in result.residuals] == ["H3 pair 1"]
