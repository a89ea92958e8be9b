"""Minimal computer-algebra kernel: parse, evaluate, differentiate, simplify, zero-test."""

from staeckelkit.exprs.calculus import (
    diff,
    order_key,
    partial,
    simplify,
    substitute,
    substitute_all,
)
from staeckelkit.exprs.nodes import (
    ONE,
    ZERO,
    Constant,
    Expr,
    FloatArray,
    IntPow,
    InverseMap,
    Product,
    Quotient,
    Sum,
    Unary,
    UnaryKind,
    Var,
    add,
    as_expr,
    cos,
    div,
    evaluate,
    evaluate_batch,
    evaluate_batch_many,
    evaluate_on_axis,
    exp,
    is_zero,
    log,
    mul,
    neg,
    power,
    sin,
    sqrt,
    sub,
    var,
)
from staeckelkit.exprs.parser import parse_expr, to_text
from staeckelkit.exprs.sampling import (
    ZeroTest,
    is_zero_sampled,
    scaled_zero_tests,
    valid_sample,
    worst,
    zero_tests,
)
from staeckelkit.models import Domain

__all__ = [
    "ONE",
    "ZERO",
    "Constant",
    "Domain",
    "Expr",
    "FloatArray",
    "IntPow",
    "InverseMap",
    "Product",
    "Quotient",
    "Sum",
    "Unary",
    "UnaryKind",
    "Var",
    "ZeroTest",
    "add",
    "as_expr",
    "cos",
    "diff",
    "div",
    "evaluate",
    "evaluate_batch",
    "evaluate_batch_many",
    "evaluate_on_axis",
    "exp",
    "is_zero",
    "is_zero_sampled",
    "log",
    "mul",
    "neg",
    "order_key",
    "parse_expr",
    "partial",
    "power",
    "scaled_zero_tests",
    "simplify",
    "sin",
    "sqrt",
    "sub",
    "substitute",
    "substitute_all",
    "to_text",
    "valid_sample",
    "var",
    "worst",
    "zero_tests",
]
