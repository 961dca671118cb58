"""Replicate-parallel batch driver.

A batch task is a callable ``task(master_seed, reps) -> dict of arrays`` that
processes the replicate indices ``reps`` and returns one row per replicate.
Replicate r always uses the substream (master_seed, r), so splitting the
index range across workers changes nothing but wall time.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import DomainError
from .rng import as_seed

WORKERS_ENV = "BIRTHTAIL_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise DomainError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def run_batch(task, replicates: int, master_seed: int, workers: int = 1,
              first_replicate: int = 0) -> dict:
    """Run ``task`` over replicates first..first+replicates-1, ordered by index."""
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    if workers < 1:
        raise DomainError("workers must be >= 1")
    seed = as_seed(master_seed)
    reps = np.arange(first_replicate, first_replicate + replicates, dtype=np.int64)
    chunks = [c for c in np.array_split(reps, min(workers, replicates)) if len(c)]
    if len(chunks) == 1:
        parts = [task(seed, chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda c: task(seed, c), chunks))
    out = {}
    for key in parts[0]:
        out[key] = np.concatenate([p[key] for p in parts])
    out["replicate"] = reps
    return out
