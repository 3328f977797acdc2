"""Ensemble execution and associative reduction of (count, sum, sum of squares)."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import path_seed


@dataclass
class Partial:
    """Running moments of one statistic (scalar or array)."""

    count: int
    total: np.ndarray
    total_sq: np.ndarray

    @classmethod
    def of(cls, x) -> "Partial":
        x = np.asarray(x, dtype=float)
        return cls(1, x.copy(), x * x)

    def merge(self, other: "Partial") -> "Partial":
        return Partial(self.count + other.count, self.total + other.total, self.total_sq + other.total_sq)

    @property
    def mean(self) -> np.ndarray:
        return self.total / self.count

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.total)
        v = (self.total_sq - self.total * self.total / self.count) / (self.count - 1)
        return np.clip(v, 0.0, None)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)


def monte_carlo_reduce(partials) -> dict:
    """Merge a sequence of ``{name: Partial}`` dicts (left fold, input order)."""
    out = {}
    for p in partials:
        for k, v in p.items():
            out[k] = v if k not in out else out[k].merge(v)
    return out


def mean_se(x) -> tuple:
    """Sample mean and standard error along the first axis, via :func:`monte_carlo_reduce`."""
    x = np.asarray(x, dtype=float)
    agg = monte_carlo_reduce({"x": Partial.of(r)} for r in x)["x"]
    return agg.mean, agg.stderr


def run_ensemble(task, n_paths: int, master_seed: int, threads: int = 1) -> list:
    """``[task(i, path_seed_i) for i in range(n_paths)]`` on a thread pool.

    Results come back in index order whatever the worker count, and each
    task depends only on its own seed, so outputs do not depend on ``threads``.
    """
    seeds = [path_seed(master_seed, i) for i in range(n_paths)]
    if threads <= 1:
        return [task(i, s) for i, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(task, range(n_paths), seeds))


def run_ensemble_batched(task, n_paths: int, master_seed: int, threads: int = 1, chunk: int = 16) -> list:
    """Like :func:`run_ensemble` but ``task(indices, seeds)`` handles a chunk of paths.

    Chunks are fixed slices of ``range(n_paths)`` so the grouping, and hence
    every result, is the same for any worker count.  Returns one result per
    path in index order.
    """
    seeds = [path_seed(master_seed, i) for i in range(n_paths)]
    starts = list(range(0, n_paths, chunk))
    jobs = [(list(range(s, min(s + chunk, n_paths))), seeds[s:s + chunk]) for s in starts]
    if threads <= 1:
        parts = [task(i, s) for i, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda j: task(*j), jobs))
    return [r for p in parts for r in p]
