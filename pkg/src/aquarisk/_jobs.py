"""Deterministic job mapping with a worker-count cap.

Jobs are zero-argument callables carrying their own pre-derived RNG state, so
results are identical for any thread count; aggregation preserves job order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")


def run_jobs(jobs: Sequence[Callable[[], T]], threads: int = 1) -> list[T]:
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if threads == 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: job(), jobs))
