"""Text form of expressions: a recursive-descent parser and a printer.

Grammar (lowest precedence first)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' ['+' | '-'] INTEGER)?
    atom   := NUMBER | 'pi' | VARIABLE | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x1 .. xn``; callers may add aliases such as ``t`` for the
row coordinate of a Stäckel matrix entry.
"""

from __future__ import annotations

import math
import re
from collections.abc import Mapping
from dataclasses import dataclass

from staeckelkit.errors import ExprSyntaxError, UnknownVariable
from staeckelkit.exprs.nodes import (
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
)

_TOKEN_RE = re.compile(
    r"(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)
_VAR_RE = re.compile(r"x([1-9][0-9]*)")
_FUNCTIONS = {kind.value: kind for kind in UnaryKind}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExprSyntaxError(pos, f"unexpected character {text[pos]!r}")
        kind = match.lastgroup or "op"
        tokens.append(_Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


def _negate(e: Expr) -> Expr:
    if isinstance(e, Constant):
        return Constant(-e.value)
    return Product((Constant(-1.0), e))


class _Parser:
    def __init__(self, text: str, n_vars: int, aliases: Mapping[str, int]) -> None:
        self._tokens = _tokenize(text)
        self._pos = 0
        self._n_vars = n_vars
        self._aliases = aliases

    @property
    def _current(self) -> _Token:
        return self._tokens[self._pos]

    def _advance(self) -> _Token:
        token = self._tokens[self._pos]
        self._pos += 1
        return token

    def _expect(self, text: str) -> None:
        token = self._current
        if token.text != text:
            found = "end of input" if token.kind == "end" else repr(token.text)
            raise ExprSyntaxError(token.position, f"expected {text!r}, found {found}")
        self._advance()

    def parse(self) -> Expr:
        result = self._expr()
        if self._current.kind != "end":
            raise ExprSyntaxError(
                self._current.position, f"unexpected {self._current.text!r} after expression"
            )
        return result

    def _expr(self) -> Expr:
        terms = [self._term()]
        while self._current.text in ("+", "-"):
            op = self._advance().text
            term = self._term()
            terms.append(term if op == "+" else _negate(term))
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def _term(self) -> Expr:
        factors = [self._unary()]
        while self._current.text in ("*", "/"):
            op = self._advance().text
            rhs = self._unary()
            if op == "*":
                factors.append(rhs)
            else:
                lhs = factors[0] if len(factors) == 1 else Product(tuple(factors))
                factors = [Quotient(lhs, rhs)]
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def _unary(self) -> Expr:
        if self._current.text == "-":
            self._advance()
            return _negate(self._unary())
        if self._current.text == "+":
            self._advance()
            return self._unary()
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self._current.text != "^":
            return base
        self._advance()
        return IntPow(base, self._integer_exponent())

    def _integer_exponent(self) -> int:
        wrapped = self._current.text == "("
        if wrapped:
            self._advance()
        sign = 1
        if self._current.text in ("+", "-"):
            sign = -1 if self._advance().text == "-" else 1
        token = self._current
        if token.kind != "number" or not token.text.isdigit():
            raise ExprSyntaxError(token.position, "exponent must be an integer literal")
        self._advance()
        if wrapped:
            self._expect(")")
        return sign * int(token.text)

    def _atom(self) -> Expr:
        token = self._current
        if token.kind == "number":
            self._advance()
            return Constant(float(token.text))
        if token.text == "(":
            self._advance()
            inner = self._expr()
            self._expect(")")
            return inner
        if token.kind == "ident":
            self._advance()
            return self._identifier(token)
        found = "end of input" if token.kind == "end" else repr(token.text)
        raise ExprSyntaxError(token.position, f"expected an operand, found {found}")

    def _identifier(self, token: _Token) -> Expr:
        name = token.text
        if name in _FUNCTIONS:
            self._expect("(")
            argument = self._expr()
            self._expect(")")
            return Unary(_FUNCTIONS[name], argument)
        if name == "pi":
            return Constant(math.pi)
        if name in self._aliases:
            return Var(self._aliases[name])
        match = _VAR_RE.fullmatch(name)
        if match is not None and int(match.group(1)) <= self._n_vars:
            return Var(int(match.group(1)) - 1)
        raise UnknownVariable(name, token.position)


def parse_expr(text: str, n_vars: int, aliases: Mapping[str, int] | None = None) -> Expr:
    """Parse ``text`` into an expression over ``x1 .. x{n_vars}``.

    ``aliases`` maps extra identifiers to zero-based variable indices.

    Raises:
        ExprSyntaxError: on malformed input, carrying the offending position.
        UnknownVariable: for an identifier that is not a known variable.
    """
    return _Parser(text, n_vars, aliases or {}).parse()


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


def _is_atomic(e: Expr) -> bool:
    if isinstance(e, Constant):
        return e.value >= 0.0
    return isinstance(e, (Var, Unary, InverseMap))


def _wrapped(e: Expr) -> str:
    text = to_text(e)
    return text if _is_atomic(e) or isinstance(e, IntPow) else f"({text})"


def to_text(e: Expr) -> str:
    """Render ``e`` so that parsing the text evaluates to the same values."""
    if isinstance(e, Constant):
        text = repr(e.value)
        return text if e.value >= 0.0 else f"({text})"
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Sum):
        return " + ".join(to_text(t) for t in e.terms)
    if isinstance(e, Product):
        return " * ".join(_wrapped(f) for f in e.factors)
    if isinstance(e, Quotient):
        return f"{_wrapped(e.num)} / {_wrapped(e.den)}"
    if isinstance(e, IntPow):
        base = to_text(e.base) if _is_atomic(e.base) else f"({to_text(e.base)})"
        return f"{base}^{e.exponent}"
    if isinstance(e, Unary):
        return f"{e.kind.value}({to_text(e.argument)})"
    if isinstance(e, InverseMap):
        return (
            f"inverse[x{e.var + 1} -> {to_text(e.forward)} on [{e.lo!r}, {e.hi!r}]]"
            f"({to_text(e.argument)})"
        )
    raise TypeError(f"cannot print {type(e).__name__}")
