"""Expression tree nodes, smart constructors and vectorised evaluation."""

from __future__ import annotations

import math
import struct
import zlib
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Union

import numpy as np
import numpy.typing as npt

from staeckelkit.errors import EvalError

FloatArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]
Value = Union[FloatArray, float]

_HASH_MASK = (1 << 61) - 1
_HASH_MULT = 1_000_003

# Inverse maps are resolved to this width in the pre-image.
BISECTION_TOL = 1e-13
BISECTION_MAX_ITER = 200


def _tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _float_bits(value: float) -> int:
    return int.from_bytes(struct.pack("<d", value), "little")


def _mix(tag: int, parts: Iterable[int]) -> int:
    h = tag & _HASH_MASK
    for part in parts:
        h = (h * _HASH_MULT + (part & _HASH_MASK) + 0x9E3779B9) & _HASH_MASK
    return h


class UnaryKind(Enum):
    SIN = "sin"
    COS = "cos"
    EXP = "exp"
    LOG = "log"
    SQRT = "sqrt"


class Expr:
    """Base class of the immutable expression nodes.

    Hashes are structural and deterministic across processes, so canonical
    orderings built from them (and therefore every sampled residual) are
    reproducible for a fixed seed.
    """

    def children(self) -> tuple[Expr, ...]:
        return ()

    def with_children(self, children: tuple[Expr, ...]) -> Expr:
        return self

    def _key(self) -> tuple[object, ...]:
        raise NotImplementedError

    def _digest_parts(self) -> Iterable[int]:
        return (c.digest for c in self.children())

    @cached_property
    def digest(self) -> int:
        return _mix(_tag(type(self).__name__), self._digest_parts())

    @cached_property
    def free_vars(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for child in self.children():
            out |= child.free_vars
        return out

    @cached_property
    def size(self) -> int:
        """Number of nodes when the tree is unfolded (shared nodes counted once per use)."""
        return 1 + sum(c.size for c in self.children())

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        raise NotImplementedError

    def __hash__(self) -> int:
        return self.digest

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr):
            return NotImplemented
        if type(self) is not type(other) or self.digest != other.digest:
            return False
        return self._key() == other._key()

    def __add__(self, other: Expr | float) -> Expr:
        return add(self, other)

    def __radd__(self, other: Expr | float) -> Expr:
        return add(other, self)

    def __sub__(self, other: Expr | float) -> Expr:
        return sub(self, other)

    def __rsub__(self, other: Expr | float) -> Expr:
        return sub(other, self)

    def __mul__(self, other: Expr | float) -> Expr:
        return mul(self, other)

    def __rmul__(self, other: Expr | float) -> Expr:
        return mul(other, self)

    def __truediv__(self, other: Expr | float) -> Expr:
        return div(self, other)

    def __rtruediv__(self, other: Expr | float) -> Expr:
        return div(other, self)

    def __neg__(self) -> Expr:
        return neg(self)

    def __pow__(self, exponent: int) -> Expr:
        if not isinstance(exponent, int):
            raise TypeError("only integer exponents are supported; use exp/log for real powers")
        return power(self, exponent)


@dataclass(frozen=True, eq=False)
class Constant(Expr):
    value: float

    def __post_init__(self) -> None:
        # normalise -0.0 so equal constants hash equally
        object.__setattr__(self, "value", float(self.value) + 0.0)

    def _key(self) -> tuple[object, ...]:
        return (self.value,)

    def _digest_parts(self) -> Iterable[int]:
        return (_float_bits(self.value),)

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        return self.value


@dataclass(frozen=True, eq=False)
class Var(Expr):
    index: int

    def _key(self) -> tuple[object, ...]:
        return (self.index,)

    def _digest_parts(self) -> Iterable[int]:
        return (self.index,)

    @cached_property
    def free_vars(self) -> frozenset[int]:
        return frozenset((self.index,))

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        if self.index >= ev.points.shape[1]:
            raise ValueError(
                f"point has {ev.points.shape[1]} coordinates, x{self.index + 1} is unavailable"
            )
        return ev.points[:, self.index]


@dataclass(frozen=True, eq=False)
class Sum(Expr):
    terms: tuple[Expr, ...]

    def children(self) -> tuple[Expr, ...]:
        return self.terms

    def with_children(self, children: tuple[Expr, ...]) -> Expr:
        return Sum(children)

    def _key(self) -> tuple[object, ...]:
        return self.terms

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        total: Value = 0.0
        for term in self.terms:
            total = total + ev.value(term)
        return total


@dataclass(frozen=True, eq=False)
class Product(Expr):
    factors: tuple[Expr, ...]

    def children(self) -> tuple[Expr, ...]:
        return self.factors

    def with_children(self, children: tuple[Expr, ...]) -> Expr:
        return Product(children)

    def _key(self) -> tuple[object, ...]:
        return self.factors

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        result: Value = 1.0
        for factor in self.factors:
            result = result * ev.value(factor)
        return result


@dataclass(frozen=True, eq=False)
class Quotient(Expr):
    num: Expr
    den: Expr

    def children(self) -> tuple[Expr, ...]:
        return (self.num, self.den)

    def with_children(self, children: tuple[Expr, ...]) -> Expr:
        return Quotient(children[0], children[1])

    def _key(self) -> tuple[object, ...]:
        return (self.num, self.den)

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        num = ev.value(self.num)
        den = ev.value(self.den)
        ev.flag(np.equal(den, 0.0), "division by zero")
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.divide(num, den)


@dataclass(frozen=True, eq=False)
class IntPow(Expr):
    base: Expr
    exponent: int

    def children(self) -> tuple[Expr, ...]:
        return (self.base,)

    def with_children(self, children: tuple[Expr, ...]) -> Expr:
        return IntPow(children[0], self.exponent)

    def _key(self) -> tuple[object, ...]:
        return (self.base, self.exponent)

    def _digest_parts(self) -> Iterable[int]:
        return (self.base.digest, self.exponent)

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        base = ev.value(self.base)
        k = self.exponent
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if k >= 0:
                return np.power(base, k)
            ev.flag(np.equal(base, 0.0), "division by zero")
            return np.divide(1.0, np.power(base, -k))


_UNARY_FUNCS: dict[UnaryKind, Callable[[Value], Value]] = {
    UnaryKind.SIN: np.sin,
    UnaryKind.COS: np.cos,
    UnaryKind.EXP: np.exp,
    UnaryKind.LOG: np.log,
    UnaryKind.SQRT: np.sqrt,
}


@dataclass(frozen=True, eq=False)
class Unary(Expr):
    kind: UnaryKind
    argument: Expr

    def children(self) -> tuple[Expr, ...]:
        return (self.argument,)

    def with_children(self, children: tuple[Expr, ...]) -> Expr:
        return Unary(self.kind, children[0])

    def _key(self) -> tuple[object, ...]:
        return (self.kind, self.argument)

    def _digest_parts(self) -> Iterable[int]:
        return (_tag(self.kind.value), self.argument.digest)

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        arg = ev.value(self.argument)
        if self.kind is UnaryKind.LOG:
            ev.flag(np.less_equal(arg, 0.0), "log of non-positive argument")
        elif self.kind is UnaryKind.SQRT:
            ev.flag(np.less(arg, 0.0), "sqrt of negative argument")
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return _UNARY_FUNCS[self.kind](arg)


@dataclass(frozen=True, eq=False)
class InverseMap(Expr):
    """Inverse of a monotone univariate map evaluated at ``argument``.

    ``forward`` depends on ``Var(var)`` only; the node evaluates to the t in
    [lo, hi] with forward(t) = argument, found by bisection.
    """

    forward: Expr
    var: int
    argument: Expr
    lo: float
    hi: float

    def children(self) -> tuple[Expr, ...]:
        return (self.argument,)

    def with_children(self, children: tuple[Expr, ...]) -> Expr:
        return InverseMap(self.forward, self.var, children[0], self.lo, self.hi)

    def _key(self) -> tuple[object, ...]:
        return (self.forward, self.var, self.argument, self.lo, self.hi)

    def _digest_parts(self) -> Iterable[int]:
        return (
            self.forward.digest,
            self.var,
            self.argument.digest,
            _float_bits(self.lo),
            _float_bits(self.hi),
        )

    def _forward_at(self, t: FloatArray) -> FloatArray:
        return evaluate_on_axis(self.forward, self.var, t)

    def _evaluate(self, ev: _BatchEvaluator) -> Value:
        y = np.broadcast_to(np.asarray(ev.value(self.argument), dtype=float), (ev.size,))
        ends = self._forward_at(np.array([self.lo, self.hi]))
        increasing = bool(ends[1] > ends[0])
        lo_img, hi_img = float(min(ends)), float(max(ends))
        outside = (y < lo_img) | (y > hi_img) | ~np.isfinite(y)
        ev.flag(outside, "inverse map argument outside the image interval")
        target = np.where(outside, lo_img, y)
        a = np.full(ev.size, self.lo)
        b = np.full(ev.size, self.hi)
        for _ in range(BISECTION_MAX_ITER):
            mid = 0.5 * (a + b)
            fm = self._forward_at(mid)
            right = fm < target if increasing else fm > target
            a = np.where(right, mid, a)
            b = np.where(right, b, mid)
            if float(np.max(b - a)) <= BISECTION_TOL:
                break
        return 0.5 * (a + b)


ZERO = Constant(0.0)
ONE = Constant(1.0)


# ---------------------------------------------------------------------------
# Smart constructors (light folding only; see calculus.simplify)
# ---------------------------------------------------------------------------


def as_expr(value: Expr | float) -> Expr:
    if isinstance(value, Expr):
        return value
    return Constant(float(value))


def is_zero(e: Expr) -> bool:
    return isinstance(e, Constant) and e.value == 0.0


def add(*terms: Expr | float) -> Expr:
    flat: list[Expr] = []
    constant = 0.0
    for term in map(as_expr, terms):
        items = term.terms if isinstance(term, Sum) else (term,)
        for item in items:
            if isinstance(item, Constant):
                constant += item.value
            else:
                flat.append(item)
    if constant != 0.0 or not flat:
        flat.append(Constant(constant))
    if len(flat) == 1:
        return flat[0]
    return Sum(tuple(flat))


def mul(*factors: Expr | float) -> Expr:
    flat: list[Expr] = []
    coeff = 1.0
    for factor in map(as_expr, factors):
        items = factor.factors if isinstance(factor, Product) else (factor,)
        for item in items:
            if isinstance(item, Constant):
                coeff *= item.value
            else:
                flat.append(item)
    if coeff == 0.0:
        return ZERO
    if not flat:
        return Constant(coeff)
    if coeff != 1.0:
        flat.insert(0, Constant(coeff))
    if len(flat) == 1:
        return flat[0]
    return Product(tuple(flat))


def neg(e: Expr | float) -> Expr:
    return mul(-1.0, e)


def sub(a: Expr | float, b: Expr | float) -> Expr:
    return add(a, neg(b))


def div(num: Expr | float, den: Expr | float) -> Expr:
    n, d = as_expr(num), as_expr(den)
    if isinstance(d, Constant):
        if d.value == 1.0:
            return n
        if d.value != 0.0:
            return mul(1.0 / d.value, n)
    if is_zero(n) and not is_zero(d):
        return ZERO
    return Quotient(n, d)


def power(base: Expr | float, exponent: int) -> Expr:
    b = as_expr(base)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return b
    if isinstance(b, Constant) and (b.value != 0.0 or exponent > 0):
        try:
            return Constant(b.value**exponent)
        except OverflowError:
            return IntPow(b, exponent)
    if isinstance(b, IntPow):
        return power(b.base, b.exponent * exponent)
    return IntPow(b, exponent)


def _unary(kind: UnaryKind, argument: Expr | float) -> Expr:
    arg = as_expr(argument)
    if isinstance(arg, Constant):
        folded = fold_unary(kind, arg.value)
        if folded is not None:
            return Constant(folded)
    return Unary(kind, arg)


def fold_unary(kind: UnaryKind, value: float) -> float | None:
    """Evaluate a unary function on a constant, or None outside its domain."""
    if kind is UnaryKind.LOG and value <= 0.0:
        return None
    if kind is UnaryKind.SQRT and value < 0.0:
        return None
    try:
        return {
            UnaryKind.SIN: math.sin,
            UnaryKind.COS: math.cos,
            UnaryKind.EXP: math.exp,
            UnaryKind.LOG: math.log,
            UnaryKind.SQRT: math.sqrt,
        }[kind](value)
    except OverflowError:
        return None


def sin(a: Expr | float) -> Expr:
    return _unary(UnaryKind.SIN, a)


def cos(a: Expr | float) -> Expr:
    return _unary(UnaryKind.COS, a)


def exp(a: Expr | float) -> Expr:
    return _unary(UnaryKind.EXP, a)


def log(a: Expr | float) -> Expr:
    return _unary(UnaryKind.LOG, a)


def sqrt(a: Expr | float) -> Expr:
    return _unary(UnaryKind.SQRT, a)


def var(index: int) -> Var:
    return Var(index)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class _BatchEvaluator:
    """Evaluates a DAG of nodes over m points, visiting each shared node once."""

    def __init__(self, points: FloatArray) -> None:
        self.points = points
        self.size = points.shape[0]
        self.bad = np.zeros(self.size, dtype=bool)
        self.reason: str | None = None
        self._memo: dict[int, Value] = {}

    def value(self, node: Expr) -> Value:
        key = id(node)
        if key in self._memo:
            return self._memo[key]
        result = node._evaluate(self)
        self._memo[key] = result
        return result

    def flag(self, mask: npt.ArrayLike, reason: str) -> None:
        hit = np.broadcast_to(np.asarray(mask, dtype=bool), (self.size,))
        if hit.any():
            self.bad |= hit
            if self.reason is None:
                self.reason = reason

    def finish(self, raw: Value) -> tuple[FloatArray, BoolArray]:
        values = np.array(np.broadcast_to(np.asarray(raw, dtype=float), (self.size,)))
        valid = ~self.bad & np.isfinite(values)
        values[~valid] = np.nan
        return values, valid


def _as_points(points: npt.ArrayLike) -> FloatArray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.ndim != 2:
        raise ValueError(f"points must be an (m, n) array, got shape {pts.shape}")
    return pts


def evaluate_batch(e: Expr, points: npt.ArrayLike) -> tuple[FloatArray, BoolArray]:
    """Evaluate ``e`` at every row of ``points``.

    Returns ``(values, valid)``; points where evaluation hit a division by
    zero, a log/sqrt domain error or a non-finite result are flagged invalid
    and carry NaN.
    """
    ev = _BatchEvaluator(_as_points(points))
    return ev.finish(ev.value(e))


def evaluate_batch_many(
    exprs: Sequence[Expr], points: npt.ArrayLike
) -> tuple[FloatArray, BoolArray]:
    """Evaluate several expressions sharing one memo; validity is the union mask.

    Returns a ``(len(exprs), m)`` value array and one validity mask.
    """
    ev = _BatchEvaluator(_as_points(points))
    raws = [ev.value(e) for e in exprs]
    rows = [np.broadcast_to(np.asarray(raw, dtype=float), (ev.size,)) for raw in raws]
    values = np.array(rows).reshape(len(exprs), ev.size)
    valid = ~ev.bad & np.all(np.isfinite(values), axis=0)
    values[:, ~valid] = np.nan
    return values, valid


def evaluate(e: Expr, point: Sequence[float] | FloatArray) -> float:
    """Evaluate ``e`` at a single point, raising EvalError on domain errors."""
    pts = _as_points(point)
    if pts.shape[0] != 1:
        raise ValueError("evaluate takes a single point; use evaluate_batch for many")
    ev = _BatchEvaluator(pts)
    raw = ev.value(e)
    if ev.bad[0]:
        raise EvalError(ev.reason or "evaluation error")
    return float(np.asarray(raw, dtype=float).reshape(-1)[0])


def evaluate_on_axis(e: Expr, axis: int, values: npt.ArrayLike) -> FloatArray:
    """Evaluate a univariate expression in ``Var(axis)`` at the given coordinates."""
    t = np.asarray(values, dtype=float).reshape(-1)
    pts = np.zeros((t.size, axis + 1))
    pts[:, axis] = t
    ev = _BatchEvaluator(pts)
    raw = ev.value(e)
    if ev.bad.any():
        raise EvalError(ev.reason or "evaluation error")
    return np.array(np.broadcast_to(np.asarray(raw, dtype=float), (t.size,)))
