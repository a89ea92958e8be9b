"""Tests for the ordered thread-pool map."""

from __future__ import annotations

import os
from unittest.mock import patch

import pytest

from staeckelkit.parallel import THREADS_ENV_VAR, map_ordered, thread_limit


def test_thread_limit_from_environment() -> None:
    with patch.dict(os.environ, {THREADS_ENV_VAR: "3"}):
        assert thread_limit() == 3


def test_thread_limit_floor() -> None:
    with patch.dict(os.environ, {THREADS_ENV_VAR: "0"}):
        assert thread_limit() == 1


def test_thread_limit_ignores_garbage() -> None:
    with patch.dict(os.environ, {THREADS_ENV_VAR: "many"}):
        assert thread_limit() == (os.cpu_count() or 1)


@pytest.mark.parametrize("threads", ["1", "4"])
def test_map_ordered_keeps_input_order(threads: str) -> None:
    with patch.dict(os.environ, {THREADS_ENV_VAR: threads}):
        assert map_ordered(lambda k: k * k, range(20)) == [k * k for k in range(20)]


def test_map_ordered_empty() -> None:
    assert map_ordered(lambda k: k, []) == []


def test_map_ordered_propagates_errors() -> None:
    def boom(k: int) -> int:
        if k == 3:
            raise RuntimeError("bad item")
        return k

    with patch.dict(os.environ, {THREADS_ENV_VAR: "4"}), pytest.raises(RuntimeError):
        map_ordered(boom, range(8))
