"""Tests for expression nodes, evaluation, differentiation and simplification."""

from __future__ import annotations

import math

import numpy as np
import pytest
import sympy
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from staeckelkit.errors import EvalError
from staeckelkit.exprs import (
    ONE,
    ZERO,
    Constant,
    Expr,
    IntPow,
    InverseMap,
    Product,
    Quotient,
    Sum,
    Unary,
    Var,
    add,
    cos,
    diff,
    div,
    evaluate,
    evaluate_batch,
    evaluate_batch_many,
    evaluate_on_axis,
    exp,
    log,
    mul,
    parse_expr,
    partial,
    power,
    simplify,
    sin,
    sqrt,
    sub,
    substitute,
    substitute_all,
    to_text,
)

x1, x2 = Var(0), Var(1)


# ---------------------------------------------------------------------------
# Random expression trees (smooth and defined on [-1, 1]^2)
# ---------------------------------------------------------------------------

_leaves = st.one_of(
    st.sampled_from([x1, x2]),
    st.floats(min_value=-1.5, max_value=1.5, allow_nan=False).map(Constant),
)


def _extend(children: st.SearchStrategy[Expr]) -> st.SearchStrategy[Expr]:
    pairs = st.tuples(children, children)
    return st.one_of(
        pairs.map(lambda ab: add(*ab)),
        pairs.map(lambda ab: sub(*ab)),
        pairs.map(lambda ab: mul(*ab)),
        pairs.map(lambda ab: div(ab[0], add(2.0, sin(ab[1])))),
        st.tuples(children, st.integers(min_value=1, max_value=2)).map(lambda be: power(*be)),
        children.map(sin),
        children.map(cos),
        children.map(lambda e: exp(mul(0.5, sin(e)))),
        children.map(lambda e: log(add(2.0, cos(e)))),
        children.map(lambda e: sqrt(add(1.5, sin(e)))),
    )


expressions = st.recursive(_leaves, _extend, max_leaves=8)
points = st.tuples(
    st.floats(min_value=-1.0, max_value=1.0), st.floats(min_value=-1.0, max_value=1.0)
)


@settings(max_examples=50, deadline=None)
@given(e=expressions, x=points, var=st.integers(min_value=0, max_value=1))
def test_diff_matches_central_difference(e: Expr, x: tuple[float, float], var: int) -> None:
    value = evaluate(e, x)
    assume(abs(value) < 1e3)
    h = 1e-6
    step = np.zeros(2)
    step[var] = h
    fd = (evaluate(e, np.add(x, step)) - evaluate(e, np.subtract(x, step))) / (2 * h)
    exact = evaluate(diff(e, var), x)
    assert abs(exact - fd) <= 1e-6 * (1 + abs(exact))


@settings(max_examples=100, deadline=None)
@given(e=expressions, x=points)
def test_simplify_preserves_values(e: Expr, x: tuple[float, float]) -> None:
    value = evaluate(e, x)
    assume(abs(value) < 1e3)
    assert evaluate(simplify(e), x) == pytest.approx(value, rel=1e-10, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(e=expressions)
def test_simplify_is_idempotent(e: Expr) -> None:
    once = simplify(e)
    assert simplify(once) == once


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def test_integer_power_value() -> None:
    assert evaluate(IntPow(x1, 3), [2.0]) == 8.0


def test_exp_log_round_trip() -> None:
    assert abs(evaluate(exp(log(x1)), [3.0]) - 3.0) <= 1e-15


def test_division_by_zero_raises() -> None:
    with pytest.raises(EvalError, match="division by zero"):
        evaluate(Quotient(ONE, x1), [0.0])


def test_log_and_sqrt_domains() -> None:
    with pytest.raises(EvalError):
        evaluate(log(x1), [0.0])
    with pytest.raises(EvalError):
        evaluate(sqrt(x1), [-1.0])
    assert evaluate(sqrt(x1), [0.0]) == 0.0


def test_evaluate_batch_flags_invalid_points() -> None:
    values, valid = evaluate_batch(Quotient(ONE, x1), [[0.0], [2.0]])
    assert valid.tolist() == [False, True]
    assert math.isnan(values[0])
    assert values[1] == 0.5


def test_evaluate_batch_many_uses_union_of_valid_masks() -> None:
    values, valid = evaluate_batch_many([log(x1), x2], [[1.0, 5.0], [-1.0, 6.0]])
    assert values.shape == (2, 2)
    assert valid.tolist() == [True, False]
    assert values[1, 0] == 5.0


def test_evaluation_is_deterministic(rng: np.random.Generator) -> None:
    e = parse_expr("sin(x1)*exp(x2)/(3 + x1^2) - sqrt(2 + cos(x2))", 2)
    pts = rng.uniform(-2, 2, size=(50, 2))
    first, _ = evaluate_batch(e, pts)
    second, _ = evaluate_batch(e, pts)
    assert np.array_equal(first, second)


def test_evaluate_on_axis() -> None:
    values = evaluate_on_axis(power(Var(2), 2), 2, [1.0, 2.0, 3.0])
    assert values.tolist() == [1.0, 4.0, 9.0]


def test_evaluate_on_axis_raises_on_invalid_point() -> None:
    with pytest.raises(EvalError):
        evaluate_on_axis(log(x1), 0, [1.0, 0.0])


def test_constant_expression_broadcasts() -> None:
    values, valid = evaluate_batch(Constant(2.5), np.zeros((3, 2)))
    assert values.tolist() == [2.5, 2.5, 2.5]
    assert valid.all()


# ---------------------------------------------------------------------------
# Structure and smart constructors
# ---------------------------------------------------------------------------


class TestStructure:
    def test_negative_zero_equals_zero(self) -> None:
        assert Constant(-0.0) == Constant(0.0)
        assert hash(Constant(-0.0)) == hash(Constant(0.0))

    def test_structural_equality(self) -> None:
        assert parse_expr("x1*x2 + 1", 2) == parse_expr("x1 * x2 + 1", 2)
        assert x1 != x2

    def test_free_vars(self) -> None:
        e = parse_expr("sin(x1) + x3^2", 3)
        assert e.free_vars == frozenset({0, 2})
        assert Constant(1.0).free_vars == frozenset()

    def test_operator_overloads(self) -> None:
        e = (x1 + 1) * 2 - x2 / 4
        assert evaluate(e, [1.0, 8.0]) == 2.0
        assert evaluate(-x1, [3.0]) == -3.0
        assert evaluate(x1**3, [2.0]) == 8.0

    def test_real_exponent_rejected(self) -> None:
        with pytest.raises(TypeError):
            x1 ** 0.5  # type: ignore[operator]

    def test_mul_absorbs_zero(self) -> None:
        assert mul(x1, 0.0, x2) == ZERO

    def test_add_folds_constants(self) -> None:
        assert add(1.0, x1, 2.0) == Sum((x1, Constant(3.0)))
        assert add(1.0, -1.0) == ZERO

    def test_div_by_one_and_constant(self) -> None:
        assert div(x1, 1.0) is x1
        assert div(x1, 4.0) == Product((Constant(0.25), x1))
        assert div(0.0, x1) == ZERO

    def test_power_folds(self) -> None:
        assert power(x1, 0) == ONE
        assert power(x1, 1) is x1
        assert power(power(x1, 2), 3) == IntPow(x1, 6)
        assert power(2.0, 3) == Constant(8.0)

    def test_unary_folds_constants(self) -> None:
        assert sin(0.0) == ZERO
        assert exp(0.0) == ONE
        assert isinstance(log(-1.0), Unary)


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


class TestDiff:
    def test_cube(self) -> None:
        assert evaluate(diff(power(x1, 3), 0), [2.0]) == 12.0

    def test_product_with_other_variable(self) -> None:
        assert diff(mul(sin(x1), x2), 1) == sin(x1)

    def test_absent_variable_gives_zero(self, rng: np.random.Generator) -> None:
        e = parse_expr("sin(x1)*exp(x1)/(2 + x1^2)", 2)
        d = diff(e, 1)
        assert d == ZERO
        values, _ = evaluate_batch(d, rng.uniform(-1, 1, size=(100, 2)))
        assert np.all(values == 0.0)

    def test_quotient_rule(self) -> None:
        e = parse_expr("x1/(1 + x1^2)", 1)
        # d/dx x/(1+x^2) = (1 - x^2)/(1 + x^2)^2
        assert evaluate(diff(e, 0), [2.0]) == pytest.approx(-3.0 / 25.0, rel=1e-14)

    def test_negative_power(self) -> None:
        assert evaluate(diff(power(x1, -2), 0), [2.0]) == pytest.approx(-0.25, rel=1e-14)

    def test_sqrt_and_log(self) -> None:
        assert evaluate(diff(sqrt(x1), 0), [4.0]) == pytest.approx(0.25, rel=1e-14)
        assert evaluate(diff(log(x1), 0), [4.0]) == pytest.approx(0.25, rel=1e-14)

    def test_mixed_partial(self) -> None:
        e = parse_expr("x1^3*x2^2", 2)
        assert evaluate(partial(e, (2, 1)), [1.0, 3.0]) == pytest.approx(36.0)
        assert partial(e, (0, 3)) == ZERO

    @pytest.mark.parametrize(
        "text",
        [
            "sin(x1)*x2^3/(1 + x1^2)",
            "exp(x1*x2) - log(2 + x2^2)",
            "sqrt(3 + sin(x1))*cos(x2)*x1^-2",
            "(x1 - x2)^3/(x1 + 4)",
        ],
    )
    def test_against_sympy(self, text: str) -> None:
        ours = parse_expr(text, 2)
        theirs = sympy.sympify(text.replace("^", "**"))
        s1, s2 = sympy.symbols("x1 x2")
        point = (0.7, -1.3)
        for var, sym in enumerate((s1, s2)):
            expected = float(sympy.diff(theirs, sym).subs({s1: point[0], s2: point[1]}))
            assert evaluate(diff(ours, var), point) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# Simplification
# ---------------------------------------------------------------------------


class TestSimplify:
    def test_drops_zero_term(self) -> None:
        assert simplify(Sum((ZERO, x1))) == x1

    def test_folds_coefficients(self) -> None:
        assert simplify(Product((ONE, x1, Constant(2.0)))) == Product((Constant(2.0), x1))

    def test_cancels_like_terms(self) -> None:
        assert simplify(sub(x1, x1)) == ZERO
        assert simplify(add(x1, x1)) == Product((Constant(2.0), x1))

    def test_merges_powers(self) -> None:
        assert simplify(Product((x1, x1))) == IntPow(x1, 2)
        assert simplify(Product((IntPow(x1, 2), IntPow(x1, -2)))) == ONE

    def test_quotient_of_equal_parts(self) -> None:
        e = parse_expr("(x1 + x2)/(x2 + x1)", 2)
        assert simplify(e) == ONE

    def test_order_independent(self) -> None:
        a = parse_expr("x2*sin(x1) + 3*x1", 2)
        b = parse_expr("x1*3 + sin(x1)*x2", 2)
        assert simplify(a) == simplify(b)


# ---------------------------------------------------------------------------
# Substitution and inverse maps
# ---------------------------------------------------------------------------


class TestSubstitute:
    def test_substitute_constant(self) -> None:
        e = parse_expr("x1^2 + x2", 2)
        assert evaluate(substitute(e, 0, Constant(3.0)), [0.0, 1.0]) == 10.0

    def test_substitute_is_simultaneous(self) -> None:
        e = parse_expr("x1 - x2", 2)
        swapped = substitute_all(e, {0: x2, 1: x1})
        assert evaluate(swapped, [1.0, 5.0]) == 4.0

    def test_untouched_expression_is_returned(self) -> None:
        e = sin(x1)
        assert substitute(e, 1, ONE) is e


class TestInverseMap:
    forward = parse_expr("x1 + x1^3/10", 1)

    def _inverse(self) -> InverseMap:
        return InverseMap(forward=self.forward, var=0, argument=x1, lo=0.0, hi=2.0)

    def test_inverts_forward_map(self) -> None:
        y = evaluate(self.forward, [1.3])
        assert evaluate(self._inverse(), [y]) == pytest.approx(1.3, abs=1e-12)

    def test_derivative_by_inverse_function_rule(self) -> None:
        y = evaluate(self.forward, [1.3])
        expected = 1.0 / (1.0 + 0.3 * 1.3**2)
        assert evaluate(diff(self._inverse(), 0), [y]) == pytest.approx(expected, rel=1e-10)

    def test_argument_outside_image(self) -> None:
        with pytest.raises(EvalError, match="outside the image"):
            evaluate(self._inverse(), [5.0])

    def test_text_form_is_display_only(self) -> None:
        assert to_text(self._inverse()).startswith("inverse[x1 -> ")
