"""
Chunked thread-pool evaluation with order-preserving results
分块线程池并行计算（保持结果顺序）
"""

import os
from multiprocessing.pool import ThreadPool
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

T = TypeVar("T")

DEFAULT_CHUNK = 65536


def worker_count() -> int:
    """Number of worker threads, capped by SNA_THREADS when set."""
    cap = os.getenv("SNA_THREADS")
    cpus = os.cpu_count() or 1
    if cap:
        try:
            return max(1, min(int(cap), cpus))
        except ValueError:
            return 1
    return cpus


def chunk_size() -> int:
    value = os.getenv("SNA_CHUNK")
    try:
        return max(1, int(value)) if value else DEFAULT_CHUNK
    except ValueError:
        return DEFAULT_CHUNK


def index_chunks(total: int, size: Optional[int] = None) -> List[Tuple[int, int]]:
    """Split range(total) into contiguous [start, stop) pieces."""
    size = size or chunk_size()
    return [(start, min(start + size, total)) for start in range(0, total, size)]


def ordered_map(func: Callable[[Tuple[int, int]], T], chunks: Sequence[Tuple[int, int]]) -> List[T]:
    """
    Apply func to every chunk; results come back in chunk order.

    Per-chunk work is pure numpy, which releases the GIL, so threads are enough.
    """
    workers = min(worker_count(), len(chunks))
    if workers <= 1:
        return [func(chunk) for chunk in chunks]
    with ThreadPool(workers) as pool:
        return pool.map(func, chunks)
