"""Path-chunk fan-out.  Chunks are fixed by the caller, so results do not
depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def chunked(items, size: int) -> list:
    items = list(items)
    size = max(1, int(size))
    return [items[i : i + size] for i in range(0, len(items), size)]


def map_chunks(func, chunks, threads: int = 1) -> list:
    """Apply ``func`` to every chunk, preserving order.  ``threads=0`` means
    one worker per CPU."""
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(chunks) <= 1:
        return [func(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, chunks))
