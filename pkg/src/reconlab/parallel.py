"""Seed derivation and order-preserving parallel map.

Work is always split into chunks whose layout depends only on the trial count,
never on the number of workers, and chunk ``i`` draws from
``SeedSequence(master, spawn_key=(stream, i))``. Results therefore do not
depend on ``jobs``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

CHUNK = 250


def derive_rng(master: int, *keys: int) -> np.random.Generator:
    """Generator for ``(master, *keys)``; distinct key tuples give independent streams."""
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys)))


def chunk_sizes(total: int, size: int = CHUNK) -> list[int]:
    return [min(size, total - a) for a in range(0, total, size)]


def default_jobs() -> int:
    return os.cpu_count() or 1


def pmap(fn: Callable, tasks: Sequence, jobs: int | None = 1) -> list:
    tasks = list(tasks)
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
        return list(ex.map(fn, tasks))


def mean_stderr(values: Iterable[float]) -> tuple[float, float]:
    """Mean and standard error with a fixed-order exact summation."""
    v = np.asarray(list(values), dtype=float)
    n = len(v)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(v.tolist()) / n
    if n == 1:
        return mean, math.nan
    var = math.fsum(((v - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)
