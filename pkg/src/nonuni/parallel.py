"""Worker pool for embarrassingly parallel trial blocks.

Results are always returned in task order, so the reduction that follows
is the same whatever the pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

BLOCK = 2048


def default_workers() -> int:
    return os.cpu_count() or 1


def blocks(n: int, size: int = BLOCK) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def map_ordered(fn: Callable[[T], R], tasks: Sequence[T], workers: int = 1) -> list[R]:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))
