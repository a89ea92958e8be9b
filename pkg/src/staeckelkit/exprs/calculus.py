"""Symbolic differentiation, substitution and canonical simplification."""

from __future__ import annotations

import logging
from functools import lru_cache, singledispatch

from staeckelkit.exprs.nodes import (
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
    UnaryKind,
    Var,
    add,
    cos,
    div,
    fold_unary,
    mul,
    neg,
    power,
    sin,
    sub,
)

logger = logging.getLogger(__name__)

SIMPLIFY_MAX_PASSES = 10
_CACHE_SIZE = 1 << 17

# Sort rank of node types inside canonical sums and products.
_TYPE_RANK: dict[type, int] = {
    Constant: 0,
    Var: 1,
    IntPow: 2,
    Unary: 3,
    InverseMap: 4,
    Product: 5,
    Quotient: 6,
    Sum: 7,
}


def order_key(e: Expr) -> tuple[int, int]:
    """Deterministic total-order key used for canonical operand ordering."""
    return (_TYPE_RANK[type(e)], e.digest)


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=_CACHE_SIZE)
def diff(e: Expr, var: int) -> Expr:
    """Partial derivative of ``e`` with respect to ``Var(var)``."""
    if var not in e.free_vars:
        return ZERO
    return _diff(e, var)


def partial(e: Expr, orders: tuple[int, ...]) -> Expr:
    """Mixed partial derivative; ``orders[i]`` is the order in ``Var(i)``."""
    out = e
    for index, k in enumerate(orders):
        for _ in range(k):
            out = diff(out, index)
            if isinstance(out, Constant) and out.value == 0.0:
                return ZERO
    return out


@singledispatch
def _diff(e: Expr, var: int) -> Expr:
    raise NotImplementedError(f"cannot differentiate {type(e).__name__}")


@_diff.register
def _(e: Var, var: int) -> Expr:
    return ONE


@_diff.register
def _(e: Sum, var: int) -> Expr:
    return add(*(diff(t, var) for t in e.terms))


@_diff.register
def _(e: Product, var: int) -> Expr:
    terms = []
    for k, factor in enumerate(e.factors):
        if var in factor.free_vars:
            terms.append(mul(*e.factors[:k], diff(factor, var), *e.factors[k + 1 :]))
    return add(*terms)


@_diff.register
def _(e: Quotient, var: int) -> Expr:
    dnum = diff(e.num, var)
    if var not in e.den.free_vars:
        return div(dnum, e.den)
    dden = diff(e.den, var)
    return div(sub(mul(dnum, e.den), mul(e.num, dden)), power(e.den, 2))


@_diff.register
def _(e: IntPow, var: int) -> Expr:
    return mul(float(e.exponent), power(e.base, e.exponent - 1), diff(e.base, var))


@_diff.register
def _(e: Unary, var: int) -> Expr:
    a = e.argument
    da = diff(a, var)
    if e.kind is UnaryKind.SIN:
        return mul(cos(a), da)
    if e.kind is UnaryKind.COS:
        return neg(mul(sin(a), da))
    if e.kind is UnaryKind.EXP:
        return mul(e, da)
    if e.kind is UnaryKind.LOG:
        return div(da, a)
    return div(da, mul(2.0, e))


@_diff.register
def _(e: InverseMap, var: int) -> Expr:
    slope = substitute(diff(e.forward, e.var), e.var, e)
    return div(diff(e.argument, var), slope)


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------


@lru_cache(maxsize=_CACHE_SIZE)
def substitute(e: Expr, var: int, replacement: Expr) -> Expr:
    """Replace every ``Var(var)`` in ``e`` by ``replacement``."""
    if var not in e.free_vars:
        return e
    if isinstance(e, Var):
        return replacement
    return e.with_children(tuple(substitute(c, var, replacement) for c in e.children()))


def substitute_all(e: Expr, mapping: dict[int, Expr]) -> Expr:
    """Simultaneous substitution of several variables."""
    return _substitute_many(e, tuple(sorted(mapping.items())))


@lru_cache(maxsize=_CACHE_SIZE)
def _substitute_many(e: Expr, pairs: tuple[tuple[int, Expr], ...]) -> Expr:
    if not any(v in e.free_vars for v, _ in pairs):
        return e
    if isinstance(e, Var):
        return dict(pairs).get(e.index, e)
    return e.with_children(tuple(_substitute_many(c, pairs) for c in e.children()))


# ---------------------------------------------------------------------------
# Simplification
# ---------------------------------------------------------------------------


def simplify(e: Expr) -> Expr:
    """Canonical, idempotent simplification.

    Flattens sums and products, folds constants, drops 0 and 1, collects like
    terms and powers and sorts operands deterministically. The result
    evaluates to the input wherever the input is defined.
    """
    current = e
    for _ in range(SIMPLIFY_MAX_PASSES):
        nxt = _simplify_once(current)
        if nxt == current:
            return nxt
        current = nxt
    logger.debug("simplify did not reach a fixed point in %d passes", SIMPLIFY_MAX_PASSES)
    return current


@lru_cache(maxsize=_CACHE_SIZE)
def _simplify_once(e: Expr) -> Expr:
    kids = e.children()
    if kids:
        e = e.with_children(tuple(_simplify_once(c) for c in kids))
    if isinstance(e, Sum):
        return _canon_sum(e.terms)
    if isinstance(e, Product):
        return _canon_product(e.factors)
    if isinstance(e, Quotient):
        return _canon_quotient(e.num, e.den)
    if isinstance(e, IntPow):
        return _canon_intpow(e.base, e.exponent)
    if isinstance(e, Unary) and isinstance(e.argument, Constant):
        folded = fold_unary(e.kind, e.argument.value)
        return e if folded is None else Constant(folded)
    return e


def _split_coefficient(e: Expr) -> tuple[float, Expr]:
    if isinstance(e, Product) and isinstance(e.factors[0], Constant):
        rest = e.factors[1:]
        return e.factors[0].value, rest[0] if len(rest) == 1 else Product(rest)
    return 1.0, e


def _scaled(coeff: float, e: Expr) -> Expr:
    if isinstance(e, Product):
        return Product((Constant(coeff), *e.factors))
    return Product((Constant(coeff), e))


def _canon_sum(terms: tuple[Expr, ...]) -> Expr:
    constant = 0.0
    groups: dict[Expr, float] = {}
    stack = list(reversed(terms))
    while stack:
        term = stack.pop()
        if isinstance(term, Sum):
            stack.extend(reversed(term.terms))
            continue
        if isinstance(term, Constant):
            constant += term.value
            continue
        coeff, rest = _split_coefficient(term)
        groups[rest] = groups.get(rest, 0.0) + coeff
    items: list[Expr] = []
    for rest in sorted(groups, key=order_key):
        coeff = groups[rest]
        if coeff == 0.0:
            continue
        items.append(rest if coeff == 1.0 else _scaled(coeff, rest))
    if constant != 0.0 or not items:
        items.append(Constant(constant))
    if len(items) == 1:
        return items[0]
    return Sum(tuple(items))


def _canon_product(factors: tuple[Expr, ...]) -> Expr:
    coeff = 1.0
    powers: dict[Expr, int] = {}
    stack = list(reversed(factors))
    while stack:
        factor = stack.pop()
        if isinstance(factor, Product):
            stack.extend(reversed(factor.factors))
            continue
        if isinstance(factor, Constant):
            coeff *= factor.value
            continue
        base, k = (factor.base, factor.exponent) if isinstance(factor, IntPow) else (factor, 1)
        powers[base] = powers.get(base, 0) + k
    if coeff == 0.0:
        return ZERO
    items: list[Expr] = []
    for base in sorted(powers, key=order_key):
        k = powers[base]
        if k == 0:
            continue
        items.append(base if k == 1 else IntPow(base, k))
    if not items:
        return Constant(coeff)
    if coeff != 1.0:
        items.insert(0, Constant(coeff))
    if len(items) == 1:
        return items[0]
    return Product(tuple(items))


def _canon_quotient(num: Expr, den: Expr) -> Expr:
    if isinstance(den, Constant):
        if den.value == 0.0:
            return Quotient(num, den)
        return _canon_product((Constant(1.0 / den.value), num))
    if isinstance(num, Constant) and num.value == 0.0:
        return ZERO
    if num == den:
        return ONE
    if isinstance(num, Quotient):
        return Quotient(num.num, _canon_product((num.den, den)))
    if isinstance(den, Quotient):
        return Quotient(_canon_product((num, den.den)), den.num)
    return Quotient(num, den)


def _canon_intpow(base: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return base
    if isinstance(base, IntPow):
        return _canon_intpow(base.base, base.exponent * k)
    if isinstance(base, Constant):
        if base.value == 0.0 and k < 0:
            return IntPow(base, k)
        try:
            return Constant(base.value**k)
        except OverflowError:
            return IntPow(base, k)
    return IntPow(base, k)
