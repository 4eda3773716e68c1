"""Deterministic randomness and fixed-chunk parallel execution.

Every random draw comes from ``stream(seed, name, chunk)``: a Philox generator
keyed by the root seed, a per-module stream name and a chunk index.  Work is
always cut into the same chunks whatever the thread count, so results depend
only on the seed.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

CHUNK = 4096


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, stream_id(name), int(chunk)])
    return np.random.Generator(np.random.Philox(ss))


def thread_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("THERMOFORMAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def chunks(total: int, size: int = CHUNK) -> list[tuple[int, int]]:
    """Half-open index ranges covering range(total) in fixed-size pieces."""
    return [(a, min(a + size, total)) for a in range(0, total, size)]


def run_chunks(fn: Callable[[int, int, int], object], total: int, threads: int | None = None,
               size: int = CHUNK) -> list:
    """Call fn(chunk_index, lo, hi) per chunk; results come back in chunk order."""
    pieces = chunks(total, size)
    n = thread_count(threads)
    if n == 1 or len(pieces) <= 1:
        return [fn(i, a, b) for i, (a, b) in enumerate(pieces)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        futs = [pool.submit(fn, i, a, b) for i, (a, b) in enumerate(pieces)]
        return [f.result() for f in futs]


def map_ordered(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    n = thread_count(threads)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
