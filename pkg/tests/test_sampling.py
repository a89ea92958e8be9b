"""Tests for sampling domains and randomized zero testing."""

from __future__ import annotations

import logging

import numpy as np
import pytest

from staeckelkit.errors import DomainTooSingular
from staeckelkit.exprs import (
    Constant,
    Domain,
    Var,
    ZeroTest,
    is_zero_sampled,
    parse_expr,
    scaled_zero_tests,
    sub,
    valid_sample,
    worst,
    zero_tests,
)


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


class TestDomain:
    def test_box(self) -> None:
        d = Domain.box(3, -1.0, 2.0, samples=10)
        assert d.n == 3
        assert d.lo.tolist() == [-1.0, -1.0, -1.0]
        assert d.hi.tolist() == [2.0, 2.0, 2.0]
        assert d.samples == 10

    def test_points_lie_inside(self) -> None:
        d = Domain(intervals=((2.0, 3.0), (4.0, 5.0)))
        pts = d.points(1000)
        assert pts.shape == (1000, 2)
        assert np.all(pts >= d.lo) and np.all(pts <= d.hi)

    def test_points_are_prefix_stable(self, unit_square: Domain) -> None:
        assert np.array_equal(unit_square.points(10), unit_square.points(100)[:10])

    def test_points_depend_on_seed_and_stream(self, unit_square: Domain) -> None:
        base = unit_square.points(5)
        assert np.array_equal(base, unit_square.points(5))
        assert not np.array_equal(base, unit_square.with_seed(7).points(5))
        assert not np.array_equal(base, unit_square.points(5, stream=1))

    def test_rejects_empty_interval(self) -> None:
        with pytest.raises(ValueError, match="lo < hi"):
            Domain(intervals=((1.0, 1.0),))

    def test_rejects_zero_samples(self) -> None:
        with pytest.raises(ValueError):
            Domain.box(2, 0.0, 1.0, samples=0)

    def test_dict_round_trip(self) -> None:
        d = Domain(intervals=((0.0, 1.0), (2.0, 3.5)), samples=64, seed=9)
        assert Domain.from_dict(d.to_dict()) == d


# ---------------------------------------------------------------------------
# Zero tests
# ---------------------------------------------------------------------------


class TestZeroTests:
    def test_identity_is_zero(self, unit_square: Domain) -> None:
        e = sub(parse_expr("sin(x1)^2 + cos(x1)^2", 2), 1.0)
        result = is_zero_sampled(e, unit_square, 1e-12)
        assert result.verdict
        assert result.witness is None
        assert result.samples_used == unit_square.samples

    def test_nonzero_reports_witness(self, unit_square: Domain) -> None:
        result = is_zero_sampled(Var(0), unit_square, 1e-9)
        assert not result.verdict
        assert 0.9 < result.max_abs <= 1.0
        assert result.witness is not None
        assert result.witness[0] == pytest.approx(result.max_abs)

    def test_shared_sample_for_several_expressions(self, unit_square: Domain) -> None:
        results = zero_tests([Var(0), Var(1), sub(Var(0), Var(0))], unit_square, 1e-9)
        assert [r.verdict for r in results] == [False, False, True]

    def test_results_are_deterministic(self, unit_square: Domain) -> None:
        e = parse_expr("x1*x2 - 0.25", 2)
        assert is_zero_sampled(e, unit_square, 1e-9) == is_zero_sampled(e, unit_square, 1e-9)

    def test_empty_list(self, unit_square: Domain) -> None:
        assert zero_tests([], unit_square, 1e-9) == []

    def test_nonpositive_tolerance(self, unit_square: Domain) -> None:
        with pytest.raises(ValueError):
            zero_tests([Var(0)], unit_square, 0.0)

    def test_worst(self) -> None:
        a = ZeroTest(verdict=True, max_abs=1e-12, witness=None, samples_used=5)
        b = ZeroTest(verdict=False, max_abs=0.5, witness=[0.1], samples_used=5)
        assert worst([a, b]) is b


class TestScaledZeroTests:
    def test_large_scale_absorbs_round_off(self, unit_square: Domain) -> None:
        e = Constant(1e-7)
        assert not zero_tests([e], unit_square, 1e-8)[0].verdict
        result = scaled_zero_tests([e], [[Constant(1e9)]], unit_square, 1e-8)[0]
        assert result.verdict
        assert result.max_abs == pytest.approx(1e-16)

    def test_small_scale_is_floored_at_one(self, unit_square: Domain) -> None:
        result = scaled_zero_tests([Constant(0.5)], [[Constant(1e-3)]], unit_square, 1e-8)[0]
        assert not result.verdict
        assert result.max_abs == pytest.approx(0.5)
        assert result.witness is not None

    def test_scale_terms_are_summed_in_magnitude(self, unit_square: Domain) -> None:
        scales = [[Constant(-3.0), Constant(2.0)]]
        result = scaled_zero_tests([Constant(1.0)], scales, unit_square, 1e-8)[0]
        assert result.max_abs == pytest.approx(0.2)

    def test_one_scale_list_per_expression(self, unit_square: Domain) -> None:
        with pytest.raises(ValueError, match="scale list"):
            scaled_zero_tests([Var(0), Var(1)], [[Var(0)]], unit_square, 1e-8)


class TestSingularSets:
    def test_mostly_undefined_raises(self) -> None:
        d = Domain.box(1, 0.0, 1.0)
        with pytest.raises(DomainTooSingular):
            valid_sample([parse_expr("sqrt(x1 - 0.95)", 1)], d)

    def test_partially_undefined_keeps_full_sample(
        self, caplog: pytest.LogCaptureFixture
    ) -> None:
        d = Domain.box(1, 0.0, 1.0)
        with caplog.at_level(logging.WARNING, logger="staeckelkit.exprs.sampling"):
            points, values = valid_sample([parse_expr("log(x1 - 0.5)", 1)], d)
        assert points.shape == (500, 1)
        assert values.shape == (1, 500)
        assert np.all(points > 0.5)
        assert "Discarded" in caplog.text

    def test_out_of_range_variable(self) -> None:
        with pytest.raises(ValueError, match="x3"):
            valid_sample([Var(2)], Domain.box(2, 0.0, 1.0))
