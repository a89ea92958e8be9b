"""Tests for the command-line front end."""

from __future__ import annotations

import json
import os
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from staeckelkit.__main__ import main
from staeckelkit.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE
from staeckelkit.parallel import THREADS_ENV_VAR

SPEC_TEMPLATE = """\
[system]
n = 2
name = "{name}"

[matrix]
rows = {rows}

[domain]
intervals = [[2.0, 3.0], [4.0, 5.0]]

[verify]
samples = 60
"""


def _spec(tmp_path: Path, rows: str, name: str = "demo") -> Path:
    path = tmp_path / f"{name}.toml"
    path.write_text(SPEC_TEMPLATE.format(name=name, rows=rows), encoding="utf-8")
    return path


def test_gallery_list(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["gallery-list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "vandermonde:N" in out
    assert "identity:N" in out


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


class TestVerify:
    def test_gallery_case_passes(self, capsys: pytest.CaptureFixture[str]) -> None:
        code = main(["-q", "verify", "--case", "identity:2", "--check", "reconstruction"])
        out = capsys.readouterr().out.splitlines()
        assert code == EXIT_OK
        assert out[0] == "case: identity:2  seed: 42"
        assert out[1].startswith("reconstruction")
        assert out[-1] == "1 checks, overall PASS"

    def test_degenerate_spec_fails(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        spec = _spec(tmp_path, '[["1", "1"], ["1", "1"]]')
        code = main(["-q", "verify", "--spec", str(spec), "--check", "involution"])
        out = capsys.readouterr().out
        assert code == EXIT_FAILED
        assert "error" in out
        assert "overall FAIL" in out

    def test_non_local_spec_is_usage_error(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        spec = _spec(tmp_path, '[["t", "x2"], ["t", "1"]]')
        code = main(["-q", "verify", "--spec", str(spec), "--check", "involution"])
        assert code == EXIT_USAGE
        assert "(1,2)" in capsys.readouterr().err

    def test_unknown_case(self, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["-q", "verify", "--case", "nosuch:3", "--all"]) == EXIT_USAGE
        assert "unknown gallery case" in capsys.readouterr().err

    def test_no_checks_selected(self, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["-q", "verify", "--case", "identity:2"]) == EXIT_USAGE
        assert "--check" in capsys.readouterr().err

    def test_spec_without_potential_skips_benenti(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        spec = _spec(tmp_path, '[["t", "1"], ["t", "1"]]')
        code = main(
            ["-q", "verify", "--spec", str(spec), "--check", "involution", "--check", "benenti"]
        )
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "skip" in out
        assert "2 checks, overall PASS" in out

    @pytest.mark.parametrize(
        ("option", "value", "message"),
        [("--samples", "0", "--samples must be >= 1"), ("--tol", "0", "--tol must be positive")],
    )
    def test_out_of_range_option_for_case(
        self, option: str, value: str, message: str, capsys: pytest.CaptureFixture[str]
    ) -> None:
        argv = ["-q", "verify", "--case", "identity:2", "--check", "involution", option, value]
        assert main(argv) == EXIT_USAGE
        assert f"error: {message}" in capsys.readouterr().err

    def test_zero_samples_for_spec(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        spec = _spec(tmp_path, '[["t", "1"], ["t", "1"]]')
        argv = ["-q", "verify", "--spec", str(spec), "--check", "involution", "--samples", "0"]
        assert main(argv) == EXIT_USAGE
        assert "--samples must be >= 1" in capsys.readouterr().err

    def test_json_without_timing_is_reproducible(self, tmp_path: Path) -> None:
        argv = ["-q", "verify", "--case", "vandermonde:2", "--check", "involution",
                "--samples", "50", "--no-timing", "--json"]
        outputs = []
        for k, threads in enumerate(("1", "4")):
            path = tmp_path / f"run{k}.json"
            with patch.dict(os.environ, {THREADS_ENV_VAR: threads}):
                assert main([*argv, str(path)]) == EXIT_OK
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]
        data = json.loads(outputs[0])
        assert data["case"] == "vandermonde:2"
        assert "wall_time" not in data["checks"][0]


# ---------------------------------------------------------------------------
# separate / report
# ---------------------------------------------------------------------------


class TestSeparate:
    def test_free_particle_export(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        out_dir = tmp_path / "axes"
        code = main(
            ["-q", "separate", "--case", "identity:2", "--E=-1,-1", "--export", str(out_dir)]
        )
        assert code == EXIT_OK
        assert "overall PASS" in capsys.readouterr().out
        data = np.loadtxt(out_dir / "axis1.csv", delimiter=",", skiprows=1)
        x, psi = data[:, 0], data[:, 1]
        np.testing.assert_allclose(psi, np.cos(x - x[0]), atol=1e-6)

    def test_bad_energy(self, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["-q", "separate", "--case", "identity:2", "--E=a,b"]) == EXIT_USAGE
        assert "bad --E" in capsys.readouterr().err

    def test_wrong_energy_count(self, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["-q", "separate", "--case", "identity:2", "--E=1,2,3"]) == EXIT_USAGE
        assert "need 2 energies" in capsys.readouterr().err

    def test_too_few_steps(self, capsys: pytest.CaptureFixture[str]) -> None:
        argv = ["-q", "separate", "--case", "identity:2", "--E=-1,-1", "--steps", "8"]
        assert main(argv) == EXIT_USAGE
        assert "error: --steps must be >= 16, got 8" in capsys.readouterr().err

    def test_too_few_steps_from_spec(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        spec = _spec(tmp_path, '[["1", "0"], ["0", "1"]]')
        with spec.open("a", encoding="utf-8") as fh:
            fh.write("steps = 8\n")
        argv = ["-q", "separate", "--spec", str(spec), "--E=-1,-1"]
        assert main(argv) == EXIT_USAGE
        assert "need at least 16 steps, got 8" in capsys.readouterr().err


def test_report_round_trip(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_path / "out" / "report.json"
    argv = ["-q", "verify", "--case", "identity:2", "--check", "reconstruction"]
    assert main([*argv, "--json", str(path)]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("case: identity:2  seed: 42")
    assert out.rstrip().endswith("1 checks, overall PASS")


def test_report_missing_file(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["report", str(tmp_path / "none.json")]) == EXIT_USAGE
    assert capsys.readouterr().err.startswith("error:")
