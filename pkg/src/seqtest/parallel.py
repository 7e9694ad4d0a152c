"""Worker-count control for the thread pools used by the compute modules."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

ENV_THREADS = "SEQTEST_THREADS"

T = TypeVar("T")
R = TypeVar("R")

_override: int | None = None


def set_threads(n: int | None) -> None:
    """Cap worker threads for the current process (``None`` restores the default)."""
    global _override
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _override = n


def get_threads() -> int:
    if _override is not None:
        return _override
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_threads(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Order-preserving map over a thread pool bounded by :func:`get_threads`."""
    items = list(items)
    workers = min(get_threads(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
