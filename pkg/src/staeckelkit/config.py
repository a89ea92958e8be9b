"""Loading system specs (TOML) and persisting verification reports (JSON)."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from staeckelkit.errors import ExprSyntaxError, RowLocalityError, SpecError, UnknownVariable
from staeckelkit.exprs import Domain, Expr, parse_expr
from staeckelkit.gallery import GalleryCase
from staeckelkit.models import Report, SystemSpec, Tolerances
from staeckelkit.separation import EnergyVector
from staeckelkit.staeckel import ROW_ALIAS, StaeckelMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class System:
    """A spec parsed into expressions, ready for the checks.

    ``fallback_potential`` stands in for ``potential`` in the potential checks
    when the system defines none (gallery cases use V_i = x_i^2).
    """

    name: str
    matrix: StaeckelMatrix
    domain: Domain
    tolerances: Tolerances = field(default_factory=Tolerances)
    potential: tuple[Expr, ...] | None = None
    energy: EnergyVector | None = None
    fallback_potential: tuple[Expr, ...] | None = None

    @classmethod
    def from_case(cls, case: GalleryCase) -> System:
        return cls(
            name=case.name,
            matrix=case.matrix,
            domain=case.domain,
            potential=case.potential,
            fallback_potential=case.sample_potential(),
        )

    @property
    def n(self) -> int:
        return self.matrix.n

    @property
    def check_potential(self) -> tuple[Expr, ...] | None:
        return self.potential if self.potential is not None else self.fallback_potential


def build_system(spec: SystemSpec) -> System:
    """Parse the DSL strings of ``spec``; row i may use ``x<i>`` or ``t``.

    Raises:
        RowLocalityError: if an entry of row i mentions another coordinate.
        ExprSyntaxError, UnknownVariable: on malformed entries.
    """
    matrix = StaeckelMatrix.from_strings(spec.rows)
    matrix.require_row_locality()
    potential = None
    if spec.potential is not None:
        potential = tuple(
            parse_expr(text, spec.n, {ROW_ALIAS: i}) for i, text in enumerate(spec.potential)
        )
        bad = [i for i, v in enumerate(potential) if v.free_vars - {i}]
        if bad:
            names = ", ".join(f"V{i + 1}" for i in bad)
            raise RowLocalityError(
                [(i, i) for i in bad],
                f"row-locality violated in potential {names}: each V_i may use only x_i",
            )
    energy = EnergyVector(tuple(spec.energy)) if spec.energy is not None else None
    return System(
        name=spec.name,
        matrix=matrix,
        domain=spec.domain,
        tolerances=spec.tolerances,
        potential=potential,
        energy=energy,
    )


class SpecManager:
    """Loads a SystemSpec from a TOML file."""

    def __init__(self, spec_path: Path) -> None:
        self.spec_path = spec_path

    def load(self) -> SystemSpec:
        """Read and validate the spec file.

        Raises:
            SpecError: if the file is missing, is not valid TOML or lacks fields.
        """
        try:
            data = tomllib.loads(self.spec_path.read_text(encoding="utf-8"))
            return SystemSpec.from_dict(data)
        except (OSError, tomllib.TOMLDecodeError, KeyError, TypeError, ValueError,
                AssertionError) as e:
            logger.error("Failed to parse spec at %s: %s", self.spec_path, e)
            raise SpecError(f"{self.spec_path}: {e}") from e

    def load_system(self) -> System:
        """Load the spec and parse it, enforcing row-locality.

        Raises:
            RowLocalityError: passed through so callers can name the entries.
            SpecError: for any other malformed content.
        """
        spec = self.load()
        try:
            return build_system(spec)
        except RowLocalityError:
            logger.error("Row-locality violated in %s", self.spec_path)
            raise
        except (ExprSyntaxError, UnknownVariable, ValueError) as e:
            logger.error("Bad expression in %s: %s", self.spec_path, e)
            raise SpecError(f"{self.spec_path}: {e}") from e


class ReportStore:
    """Loads and saves machine-readable reports as JSON."""

    def __init__(self, report_path: Path) -> None:
        self.report_path = report_path

    def load(self) -> Report:
        """Read a stored report.

        Raises:
            SpecError: if the file is missing or malformed.
        """
        try:
            data = json.loads(self.report_path.read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise TypeError("report must be a JSON object")
            return Report.from_dict(data)
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError,
                AssertionError) as e:
            logger.error("Failed to parse report at %s: %s", self.report_path, e)
            raise SpecError(f"{self.report_path}: {e}") from e

    def save(self, report: Report, include_timing: bool = True) -> None:
        """Save the report, creating parent directories as needed."""
        self.report_path.parent.mkdir(parents=True, exist_ok=True)
        data = json.dumps(report.to_dict(include_timing), indent=2, sort_keys=True)
        self.report_path.write_text(data + "\n", encoding="utf-8")
        logger.info("Report saved to %s", self.report_path)
