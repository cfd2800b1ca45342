"""Ordered worker-pool map; results land in input order regardless of scheduling."""

from __future__ import annotations

import os


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(func, items, n_jobs=1):
    items = list(items)
    if n_jobs in (None, 0):
        n_jobs = 1
    if n_jobs == 1 or len(items) <= 1:
        return [func(x) for x in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(func)(x) for x in items)
