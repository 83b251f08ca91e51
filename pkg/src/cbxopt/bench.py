"""Benchmark objectives with known minimizers and a seeded success-rate harness."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .core import CbxConfig, CbxError, ConfigError, ObjectiveHandle
from .dynamics import iterate


def sphere(X):
    X = np.atleast_2d(X)
    return np.sum(X * X, axis=1)


def ackley(X, a=20.0, b=0.2, c=2.0 * math.pi):
    X = np.atleast_2d(X)
    term1 = -a * np.exp(-b * np.sqrt(np.mean(X * X, axis=1)))
    term2 = -np.exp(np.mean(np.cos(c * X), axis=1))
    return term1 + term2 + a + math.e


def rastrigin(X):
    X = np.atleast_2d(X)
    return 10.0 * X.shape[1] + np.sum(X * X - 10.0 * np.cos(2.0 * math.pi * X), axis=1)


CORPUS = {
    "sphere": sphere,
    "ackley": ackley,
    "rastrigin": rastrigin,
}


@dataclass(frozen=True)
class NamedObjective:
    name: str
    dimension: int
    known_minimizer: np.ndarray
    known_minimum_value: float
    batch_fn: Callable = field(repr=False)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"{self.name} expects a vector of length {self.dimension}, got shape {x.shape}")
        return float(self.batch_fn(x[None, :])[0])

    def handle(self) -> ObjectiveHandle:
        """A fresh counted handle (counter starts at zero)."""
        return ObjectiveHandle(self, self.batch_fn, self.known_minimizer, self.known_minimum_value)


def make_objective(name: str, d: int) -> NamedObjective:
    if name not in CORPUS:
        raise ConfigError(f"unknown objective {name!r}; available: {sorted(CORPUS)}", key="objective")
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ConfigError(f"dimension must be a positive integer, got {d!r}", key="dimension")
    return NamedObjective(name, d, np.zeros(d), 0.0, CORPUS[name])


class BenchRunError(CbxError):
    def __init__(self, seed: int, cause: Exception):
        self.seed = seed
        super().__init__(f"run with seed {seed} failed: {cause}")


@dataclass
class RunRecord:
    seed: int
    distance: float
    iterations: int
    eval_count: int
    wall_ms: float

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "distance": float(self.distance),
            "iterations": self.iterations,
            "eval_count": self.eval_count,
            "wall_ms": self.wall_ms,
        }


@dataclass
class BenchReport:
    runs: int
    successes: int
    success_rate: float
    tolerance: float
    per_run: List[RunRecord]
    effective_config: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "successes": self.successes,
            "success_rate": self.success_rate,
            # JSON has no infinity literal
            "tolerance": self.tolerance if math.isfinite(self.tolerance) else str(self.tolerance),
            "per_run": [r.to_dict() for r in self.per_run],
            "effective_config": self.effective_config,
        }


def _single_run(config: CbxConfig, objective: NamedObjective, seed: int) -> RunRecord:
    cfg = replace(config, seed=seed)
    start = time.perf_counter()
    try:
        result, _ = iterate(cfg, objective.handle())
    except CbxError as exc:
        raise BenchRunError(seed, exc) from exc
    wall_ms = (time.perf_counter() - start) * 1e3
    distance = float(np.linalg.norm(result.minimizer_estimate - objective.known_minimizer))
    return RunRecord(seed, distance, result.iterations, result.eval_count, wall_ms)


def run_benchmark(
    config: CbxConfig,
    objective: NamedObjective,
    runs: int,
    base_seed: int = 0,
    tolerance: float = 0.1,
    workers: Optional[int] = None,
    effective_config: Optional[dict] = None,
) -> BenchReport:
    """Run ``runs`` independent seeds and count those ending within ``tolerance``.

    Seeds are ``base_seed, ..., base_seed + runs - 1``. A run succeeds when the
    Euclidean distance from its final consensus to the known minimizer is
    strictly below ``tolerance``. With ``workers > 1`` runs execute on a thread
    pool; the report lists them in seed order either way.
    """
    if isinstance(runs, bool) or not isinstance(runs, int) or runs < 1:
        raise ConfigError(f"runs must be a positive integer, got {runs!r}", key="runs")
    if not tolerance >= 0:
        raise ConfigError(f"tolerance must be nonnegative, got {tolerance}", key="tolerance")
    if objective.dimension != config.dimension:
        raise ConfigError(
            f"objective dimension {objective.dimension} != config dimension {config.dimension}", key="dimension"
        )
    seeds = [base_seed + k for k in range(runs)]
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda s: _single_run(config, objective, s), seeds))
    else:
        records = [_single_run(config, objective, s) for s in seeds]

    successes = sum(r.distance < tolerance for r in records)
    return BenchReport(
        runs=runs,
        successes=successes,
        success_rate=successes / runs,
        tolerance=float(tolerance),
        per_run=records,
        effective_config=effective_config,
    )
