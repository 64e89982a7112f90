from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar("T")
R = TypeVar("R")

# Ограничение параллельных вычислений по циклам
WORKERS = int(os.getenv("WORKERS", "2"))


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> List[R]:
    """Run fn over items on a small thread pool; results keep input order."""
    items = list(items)
    n = workers if workers is not None else WORKERS
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
