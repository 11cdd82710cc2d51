"""Monte Carlo disorder averaging with schedule-independent reduction."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Any, Callable, List, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .config import ModelConfig
from .model import DisorderRealization, sample_realization

THREADS_ENV = "ANDERSON_LAB_THREADS"


class RealizationError(RuntimeError):
    """A statistic failed on one realization; carries its ``(seed, index)``."""

    def __init__(self, seed_path: Tuple[int, int], cause: BaseException):
        super().__init__(f"statistic failed on realization seed_path={seed_path}: {cause!r}")
        self.seed_path = seed_path
        self.cause = cause


def worker_count(n_tasks: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    workers = int(env) if env else (os.cpu_count() or 1)
    workers = max(1, workers)
    return min(workers, n_tasks) if n_tasks else workers


def pairwise_sum(values: np.ndarray) -> np.ndarray:
    """Sum along axis 0 with a fixed binary tree (split at the midpoint)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 0:
        return np.zeros(values.shape[1:])
    if n == 1:
        return values[0].copy()
    if n == 2:
        return values[0] + values[1]
    mid = n // 2
    return pairwise_sum(values[:mid]) + pairwise_sum(values[mid:])


def z_value(level: float) -> float:
    return NormalDist().inv_cdf(0.5 + level / 2.0)


@dataclass(frozen=True, eq=False)
class EstimatorResult:
    """Sample mean with standard error and normal-approximation interval.

    ``mean`` and ``stderr`` are scalars or arrays (one entry per abscissa
    point of a scan).
    """

    statistic: str
    mean: Any
    stderr: Any
    n_realizations: int
    confidence_interval: Tuple[Any, Any]
    seed: int
    level: float = 0.95

    def as_dict(self):
        def conv(x):
            return x.tolist() if isinstance(x, np.ndarray) else float(x)
        return {
            "statistic": self.statistic,
            "mean": conv(self.mean),
            "stderr": conv(self.stderr),
            "n_realizations": self.n_realizations,
            "confidence_interval": [conv(self.confidence_interval[0]), conv(self.confidence_interval[1])],
            "seed": self.seed,
            "level": self.level,
        }


def summarize(samples: np.ndarray, statistic: str = "", seed: int = 0, level: float = 0.95) -> EstimatorResult:
    """Mean, stderr = sample std / sqrt(n), and CI of stacked per-realization samples."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("no samples")
    mean = pairwise_sum(x) / n
    if n > 1:
        var = pairwise_sum((x - mean) ** 2) / (n - 1)
        stderr = np.sqrt(var / n)
    else:
        stderr = np.zeros_like(mean)
    z = z_value(level)
    if np.ndim(mean) == 0:
        mean, stderr = float(mean), float(stderr)
    return EstimatorResult(statistic, mean, stderr, n, (mean - z * stderr, mean + z * stderr), seed, level)


def mc_map(fn: Callable[[ModelConfig, DisorderRealization], Any], config: ModelConfig, n: int,
           L: int | None = None, workers: int | None = None) -> List[Any]:
    """Evaluate ``fn`` on realizations ``0..n-1``; results are returned in index order.

    BLAS is pinned to one thread for the duration so that every realization's
    numerics are identical whatever the worker count.
    """
    if n < 1:
        raise ValueError("need at least one realization")
    workers = worker_count(n) if workers is None else max(1, min(workers, n))

    def one(i):
        omega = sample_realization(config, i, L)
        try:
            return fn(config, omega)
        except Exception as exc:
            raise RealizationError(omega.seed_path, exc) from exc

    with threadpool_limits(limits=1):
        if workers == 1:
            return [one(i) for i in range(n)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(n)))


def mc_expectation(statistic: Callable[[ModelConfig, DisorderRealization], Any], config: ModelConfig,
                   n: int, seed: int | None = None, name: str | None = None, level: float = 0.95,
                   L: int | None = None, workers: int | None = None) -> EstimatorResult:
    """Disorder average of a per-realization statistic (scalar or array-valued)."""
    if seed is not None:
        config = replace(config, seed=seed)
    values = mc_map(statistic, config, n, L=L, workers=workers)
    name = name or getattr(statistic, "__name__", "statistic")
    return summarize(np.asarray(values, dtype=float), name, config.seed, level)


def wilson_interval(successes: int, n: int, level: float = 0.95) -> Tuple[float, float]:
    from statsmodels.stats.proportion import proportion_confint

    lo, hi = proportion_confint(successes, n, alpha=1.0 - level, method="wilson")
    return float(lo), float(hi)

