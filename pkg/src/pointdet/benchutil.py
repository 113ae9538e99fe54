"""Micro-benchmark helpers: warm runs, median/p95 wall time, peak allocation."""

from __future__ import annotations

import time
import tracemalloc
from typing import Callable

import numpy as np


def time_callable(fn: Callable[[], object], warmup: int = 3, reps: int = 10) -> dict:
    """Median and p95 wall time in milliseconds over `reps` warm runs."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    arr = np.asarray(samples)
    return {
        "median_ms": float(np.median(arr)),
        "p95_ms": float(np.percentile(arr, 95)),
        "min_ms": float(arr.min()),
        "reps": reps,
    }


def peak_allocation(fn: Callable[[], object]) -> int:
    """Peak traced allocation in bytes during one call."""
    tracemalloc.start()
    try:
        fn()
        _current, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak
