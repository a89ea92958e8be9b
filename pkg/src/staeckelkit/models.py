"""Data models for system specs, sampling domains and verification reports."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TypeVar

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
T = TypeVar("T")

DEFAULT_SEED = 42
DEFAULT_SAMPLES = 500
DEFAULT_TOL = 1e-9
DEFAULT_TOL_SECOND = 1e-8
DEFAULT_TOL_EIGEN = 1e-5
DEFAULT_TOL_SELFADJOINT = 1e-6
DEFAULT_EPS_DET = 1e-10
DEFAULT_QUAD_NODES = 64
DEFAULT_STEPS = 256


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box with the sample count and seed used by randomized checks."""

    intervals: tuple[tuple[float, float], ...]
    samples: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        intervals = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", intervals)
        if not intervals:
            raise ValueError("domain needs at least one axis")
        for i, (lo, hi) in enumerate(intervals):
            if not lo < hi:
                raise ValueError(f"axis {i + 1}: need lo < hi, got [{lo}, {hi}]")
        if self.samples < 1:
            raise ValueError(f"sample count must be >= 1, got {self.samples}")

    @classmethod
    def box(cls, n: int, lo: float, hi: float, **kwargs: int) -> Domain:
        return cls(intervals=tuple((lo, hi) for _ in range(n)), **kwargs)

    @property
    def n(self) -> int:
        return len(self.intervals)

    @property
    def lo(self) -> FloatArray:
        return np.array([a for a, _ in self.intervals])

    @property
    def hi(self) -> FloatArray:
        return np.array([b for _, b in self.intervals])

    def points(self, count: int, stream: int = 0) -> FloatArray:
        """Uniform sample block; row k depends only on (seed, stream, k)."""
        rng = np.random.default_rng([self.seed, stream])
        return rng.uniform(self.lo, self.hi, size=(count, self.n))

    def with_samples(self, samples: int) -> Domain:
        return replace(self, samples=samples)

    def with_seed(self, seed: int) -> Domain:
        return replace(self, seed=seed)

    def to_dict(self) -> dict[str, object]:
        return {
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "samples": self.samples,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> Domain:
        intervals = data["intervals"]
        assert isinstance(intervals, list)
        return cls(
            intervals=tuple((float(lo), float(hi)) for lo, hi in intervals),
            samples=int(data.get("samples", DEFAULT_SAMPLES)),  # type: ignore[call-overload]
            seed=int(data.get("seed", DEFAULT_SEED)),  # type: ignore[call-overload]
        )


@dataclass(frozen=True)
class Tolerances:
    """Thresholds and resolution settings for the verification checks."""

    tol: float = DEFAULT_TOL
    tol_second: float = DEFAULT_TOL_SECOND
    tol_eigen: float = DEFAULT_TOL_EIGEN
    tol_selfadjoint: float = DEFAULT_TOL_SELFADJOINT
    eps_det: float = DEFAULT_EPS_DET
    quad_nodes: int = DEFAULT_QUAD_NODES
    steps: int = DEFAULT_STEPS

    def __post_init__(self) -> None:
        for name in ("tol", "tol_second", "tol_eigen", "tol_selfadjoint", "eps_det"):
            value = getattr(self, name)
            if not value > 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.quad_nodes < 2:
            raise ValueError(f"quad_nodes must be >= 2, got {self.quad_nodes}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    def to_dict(self) -> dict[str, float | int]:
        return {
            "tol": self.tol,
            "tol_second": self.tol_second,
            "tol_eigen": self.tol_eigen,
            "tol_selfadjoint": self.tol_selfadjoint,
            "eps_det": self.eps_det,
            "quad_nodes": self.quad_nodes,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> Tolerances:
        def num(key: str, default: float) -> float:
            return _number(data.get(key, default))

        return cls(
            tol=num("tol", DEFAULT_TOL),
            tol_second=num("tol_second", DEFAULT_TOL_SECOND),
            tol_eigen=num("tol_eigen", DEFAULT_TOL_EIGEN),
            tol_selfadjoint=num("tol_selfadjoint", DEFAULT_TOL_SELFADJOINT),
            eps_det=num("eps_det", DEFAULT_EPS_DET),
            quad_nodes=int(num("quad_nodes", DEFAULT_QUAD_NODES)),
            steps=int(num("steps", DEFAULT_STEPS)),
        )


@dataclass
class SystemSpec:
    """A Stäckel system as written in a spec file: DSL strings plus settings."""

    n: int
    rows: list[list[str]]
    domain: Domain
    name: str = "system"
    potential: list[str] | None = None
    energy: list[float] | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self) -> None:
        if len(self.rows) != self.n or any(len(row) != self.n for row in self.rows):
            raise ValueError(f"matrix must be {self.n}x{self.n}")
        if self.domain.n != self.n:
            raise ValueError(f"domain has {self.domain.n} axes, system has {self.n}")
        if self.potential is not None and len(self.potential) != self.n:
            raise ValueError(f"potential needs {self.n} entries, got {len(self.potential)}")
        if self.energy is not None and len(self.energy) != self.n:
            raise ValueError(f"energy needs {self.n} entries, got {len(self.energy)}")

    def to_dict(self) -> dict[str, object]:
        data: dict[str, object] = {
            "system": {"n": self.n, "name": self.name},
            "matrix": {"rows": [list(row) for row in self.rows]},
            "domain": {"intervals": [[lo, hi] for lo, hi in self.domain.intervals]},
            "verify": {
                "samples": self.domain.samples,
                "seed": self.domain.seed,
                **self.tolerances.to_dict(),
            },
        }
        if self.potential is not None:
            data["potential"] = {"V": list(self.potential)}
        if self.energy is not None:
            data["energy"] = {"E": list(self.energy)}
        return data

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> SystemSpec:
        system = _section(data, "system")
        matrix = _section(data, "matrix")
        domain = _section(data, "domain")
        verify = _section(data, "verify", required=False)
        rows = matrix["rows"]
        assert isinstance(rows, list)
        potential = _section(data, "potential", required=False).get("V")
        energy = _section(data, "energy", required=False).get("E")
        return cls(
            n=int(system["n"]),  # type: ignore[call-overload]
            name=str(system.get("name", "system")),
            rows=[[str(entry) for entry in row] for row in rows],
            domain=Domain.from_dict({**verify, "intervals": domain["intervals"]}),
            potential=_optional_list(potential, str),
            energy=_optional_list(energy, float),
            tolerances=Tolerances.from_dict(verify),
        )


def _section(data: dict[str, object], name: str, required: bool = True) -> dict[str, object]:
    section = data.get(name)
    if section is None:
        if required:
            raise KeyError(f"missing [{name}] section")
        return {}
    if not isinstance(section, dict):
        raise TypeError(f"[{name}] must be a table")
    return section


def _number(value: object) -> float:
    if not isinstance(value, (int, float, str)):
        raise TypeError(f"expected a number, got {type(value).__name__}")
    return float(value)


def _optional_list(value: object, kind: type[T]) -> list[T] | None:
    if value is None:
        return None
    if not isinstance(value, list):
        raise TypeError(f"expected a list, got {type(value).__name__}")
    return [kind(item) for item in value]  # type: ignore[call-arg]


class CheckStatus(Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"
    SKIP = "skip"


@dataclass
class Residual:
    """One labelled residual of a check, e.g. the bracket of a single pair."""

    label: str
    value: float
    witness: list[float] | None = None

    def to_dict(self) -> dict[str, object]:
        return {"label": self.label, "value": _json_float(self.value), "witness": self.witness}

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> Residual:
        witness = data.get("witness")
        return cls(
            label=str(data["label"]),
            value=float("nan") if data["value"] is None else _number(data["value"]),
            witness=_optional_list(witness, float),
        )


@dataclass
class CheckResult:
    """Outcome of a single named verification."""

    name: str
    status: CheckStatus
    max_residual: float
    tol: float
    witness: list[float] | None = None
    residuals: list[Residual] = field(default_factory=list)
    message: str = ""
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status is CheckStatus.PASS

    @property
    def failed(self) -> bool:
        return self.status in (CheckStatus.FAIL, CheckStatus.ERROR)

    @classmethod
    def from_residuals(
        cls, name: str, residuals: list[Residual], tol: float, message: str = ""
    ) -> CheckResult:
        """Summarise residuals; the check passes when every one is within ``tol``."""
        if not residuals:
            return cls(name=name, status=CheckStatus.PASS, max_residual=0.0, tol=tol,
                       message=message)
        worst = max(residuals, key=lambda r: r.value)
        status = CheckStatus.PASS if worst.value <= tol else CheckStatus.FAIL
        return cls(
            name=name,
            status=status,
            max_residual=worst.value,
            tol=tol,
            witness=worst.witness if status is CheckStatus.FAIL else None,
            residuals=residuals,
            message=message,
        )

    @classmethod
    def error(cls, name: str, message: str, tol: float = 0.0) -> CheckResult:
        return cls(name=name, status=CheckStatus.ERROR, max_residual=float("nan"), tol=tol,
                   message=message)

    @classmethod
    def skipped(cls, name: str, message: str) -> CheckResult:
        return cls(name=name, status=CheckStatus.SKIP, max_residual=0.0, tol=0.0,
                   message=message)

    def to_dict(self, include_timing: bool = True) -> dict[str, object]:
        data: dict[str, object] = {
            "name": self.name,
            "status": self.status.value,
            "max_residual": _json_float(self.max_residual),
            "tol": self.tol,
            "witness": self.witness,
            "residuals": [r.to_dict() for r in self.residuals],
            "message": self.message,
        }
        if include_timing:
            data["wall_time"] = self.wall_time
        return data

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> CheckResult:
        residuals = data.get("residuals", [])
        witness = data.get("witness")
        max_residual = data.get("max_residual")
        assert isinstance(residuals, list)
        return cls(
            name=str(data["name"]),
            status=CheckStatus(data["status"]),
            max_residual=float("nan") if max_residual is None else _number(max_residual),
            tol=_number(data["tol"]),
            witness=_optional_list(witness, float),
            residuals=[Residual.from_dict(r) for r in residuals],
            message=str(data.get("message", "")),
            wall_time=_number(data.get("wall_time", 0.0)),
        )


def _json_float(value: float) -> float | None:
    # NaN is not valid JSON
    return None if value != value else value


@dataclass
class Report:
    """All check results of one run against one system."""

    case: str
    seed: int = DEFAULT_SEED
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(c.failed for c in self.checks)

    def to_dict(self, include_timing: bool = True) -> dict[str, object]:
        return {
            "case": self.case,
            "seed": self.seed,
            "checks": [c.to_dict(include_timing) for c in self.checks],
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> Report:
        checks = data.get("checks", [])
        assert isinstance(checks, list)
        return cls(
            case=str(data["case"]),
            seed=int(data.get("seed", DEFAULT_SEED)),  # type: ignore[call-overload]
            checks=[CheckResult.from_dict(c) for c in checks],
        )
