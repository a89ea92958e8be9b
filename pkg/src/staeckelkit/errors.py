"""Exception hierarchy for staeckelkit."""

from __future__ import annotations


class StaeckelError(Exception):
    """Base class for every error raised by staeckelkit."""


class ExprSyntaxError(StaeckelError, ValueError):
    """The expression text does not match the DSL grammar."""

    def __init__(self, position: int, message: str) -> None:
        super().__init__(f"at position {position}: {message}")
        self.position = position
        self.message = message


class UnknownVariable(StaeckelError, ValueError):
    """An identifier that is neither a declared variable nor an alias."""

    def __init__(self, name: str, position: int = -1) -> None:
        where = f" at position {position}" if position >= 0 else ""
        super().__init__(f"unknown variable '{name}'{where}")
        self.name = name
        self.position = position


class EvalError(StaeckelError, ArithmeticError):
    """Division by zero or a log/sqrt argument outside its domain."""


class DomainTooSingular(StaeckelError):
    """Too many sampled points of a domain hit evaluation errors."""


class DegenerateMatrix(StaeckelError):
    """The Stäckel matrix determinant is (numerically) zero somewhere on the domain."""

    def __init__(self, message: str, witness: list[float] | None = None) -> None:
        super().__init__(message)
        self.witness = witness


class RowLocalityError(StaeckelError, ValueError):
    """A matrix entry references a coordinate other than its row variable."""

    def __init__(self, entries: list[tuple[int, int]], message: str | None = None) -> None:
        coords = ", ".join(f"({i + 1},{j + 1})" for i, j in entries)
        super().__init__(message or f"row-locality violated at entries {coords}")
        self.entries = entries


class OrderOverflow(StaeckelError):
    """An operator composition would exceed the supported derivative order."""


class QuadratureFailure(StaeckelError):
    """The weight function changes sign on the integration domain."""


class GridMismatch(StaeckelError):
    """Axis solutions do not form one grid per dimension."""


class DimensionOutOfRange(StaeckelError, ValueError):
    """Requested dimension is outside the supported range."""


class DuplicateExponents(StaeckelError, ValueError):
    """Power-law exponents must be mutually different."""


class NonMonotone(StaeckelError, ValueError):
    """A coordinate map has a vanishing or sign-changing derivative."""


class SpecError(StaeckelError):
    """A system spec or stored report could not be read."""
