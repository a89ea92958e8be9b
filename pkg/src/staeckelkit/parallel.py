"""Ordered thread-pool map used by the pairwise verification loops."""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "STAECKEL_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def thread_limit() -> int:
    """Worker count from STAECKEL_THREADS, defaulting to the CPU count."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r (not an integer)", THREADS_ENV_VAR, raw)
        return os.cpu_count() or 1
    return max(1, value)


def map_ordered(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Apply ``fn`` to every item, returning results in input order.

    Exceptions raised by ``fn`` propagate to the caller.
    """
    work = list(items)
    workers = min(thread_limit(), len(work))
    if workers <= 1:
        return [fn(item) for item in work]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="staeckel") as pool:
        return list(pool.map(fn, work))
