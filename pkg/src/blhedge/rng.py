"""Keyed counter-based random streams and deterministic chunked execution.

Every random draw is addressed by ``(seed, stream, chunk, draw index)``: the
chunk's generator is a Philox instance whose 128-bit key packs the seed, a
stream tag and the chunk index, and the draw index is the position inside that
chunk's counter sequence.  Work split into fixed-size chunks therefore produces
identical numbers whatever the thread count or scheduling order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

DEFAULT_CHUNK = 4096
_MASK64 = (1 << 64) - 1

# stream tags
TERMINAL = 0
PATH = 1
BRIDGE = 2
EXTENSION = 3
MEMBERSHIP = 4


def chunk_generator(seed: int, chunk: int, stream: int = TERMINAL) -> np.random.Generator:
    """Generator for one chunk; distinct (seed, stream, chunk) keys never collide."""
    if chunk < 0 or chunk >= (1 << 40):
        raise ValueError(f"chunk index out of range: {chunk}")
    if stream < 0 or stream >= (1 << 24):
        raise ValueError(f"stream tag out of range: {stream}")
    key = (int(seed) & _MASK64) | (((int(stream) << 40) | int(chunk)) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def chunk_bounds(count: int, chunk_size: int = DEFAULT_CHUNK) -> list[tuple[int, int, int]]:
    """``(chunk_index, start, stop)`` triples covering ``range(count)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(i, s, min(s + chunk_size, count)) for i, s in enumerate(range(0, count, chunk_size))]


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        env = os.environ.get("BLHEDGE_THREADS")
        if env:
            return max(1, int(env))
        return os.cpu_count() or 1
    return int(threads)


def map_ordered(fn: Callable[[T], object], items: Sequence[T], threads: int | None = None) -> list:
    """Map ``fn`` over ``items`` on a thread pool, returning results in item order."""
    workers = min(resolve_threads(threads), max(1, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))

