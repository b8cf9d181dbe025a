"""Deterministic batching of per-path work across threads.

Work is split into fixed-size batches of path indices. The batch layout
depends only on ``n_paths`` and ``batch_size``, never on the worker count,
and results are reassembled in path order, so any reduction done afterwards
on the concatenated array is bit-identical for every ``threads`` value.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

DEFAULT_BATCH = 1000


def batches(n_paths: int, batch_size: int = DEFAULT_BATCH) -> list[range]:
    if n_paths < 1:
        raise ConfigError("n_paths must be >= 1", field="n_paths")
    batch_size = max(1, int(batch_size))
    return [range(s, min(s + batch_size, n_paths)) for s in range(0, n_paths, batch_size)]


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def map_batches(
    fn: Callable[[range], object],
    n_paths: int,
    *,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> list:
    """Apply ``fn`` to each path batch; return results in batch order."""
    parts = batches(n_paths, batch_size)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(parts) == 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, parts))


def concat(parts: Sequence, axis: int = 0):
    """Concatenate per-batch results (arrays or tuples of arrays)."""
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[k] for p in parts], axis=axis) for k in range(len(parts[0])))
    return np.concatenate(parts, axis=axis)


def pairwise_mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error; ``np.sum`` reduces pairwise in a fixed order.

    Deviations are taken from the first sample, so constant samples give a
    standard error of exactly zero.
    """
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n == 0:
        raise ValueError("no samples")
    dev = values - values[0]
    shift = float(np.sum(dev) / n)
    mean = float(values[0] + shift)
    if n < 2:
        return mean, 0.0
    var = float(np.sum((dev - shift) ** 2) / (n - 1))
    return mean, float(np.sqrt(var / n))
