"""Domain types, ensemble initialisation and counted objective evaluation."""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng

VARIANTS = ("cbo", "polarized_cbo", "memory_cbo", "cbs")
NOISE_MODELS = ("isotropic", "anisotropic")
CBS_MODES = ("sampling", "optimization")
STOP_REASONS = ("max_iterations", "max_evals", "diameter_tol", "consensus_stall")


class CbxError(Exception):
    pass


class ConfigError(CbxError, ValueError):
    """Invalid method configuration.

    ``key`` names the offending field when known; ``line`` is filled in by
    the config-file parser.
    """

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        if self.key is not None and f"'{self.key}'" not in msg:
            msg = f"{self.key}: {msg}"
        if self.line is not None:
            msg = f"{msg} (line {self.line})"
        return msg


class EvaluationError(CbxError):
    def __init__(self, message: str, index: int, iteration: Optional[int] = None):
        self.index = index
        self.iteration = iteration
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        return msg if self.iteration is None else f"{msg} (iteration {self.iteration})"


class NumericalError(CbxError):
    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        super().__init__(message)


@dataclass
class Ensemble:
    """Particle positions plus the auxiliary state carried between steps.

    ``values`` caches the objective at ``positions`` so that each particle is
    evaluated once per iteration.
    """

    positions: np.ndarray
    values: Optional[np.ndarray] = None
    personal_bests: Optional[np.ndarray] = None
    personal_best_values: Optional[np.ndarray] = None

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "Ensemble":
        def _c(a):
            return None if a is None else a.copy()

        return Ensemble(
            self.positions.copy(), _c(self.values), _c(self.personal_bests), _c(self.personal_best_values)
        )


class ObjectiveHandle:
    """Black-box objective with a thread-safe evaluation counter.

    Parameters
    ----------
    fn : callable
        Maps a d-vector to a real number.
    batch_fn : callable, optional
        Maps a k x d array to k values in one call; used when present.
    known_minimizer, known_minimum_value : optional
        Metadata for benchmark objectives.
    """

    def __init__(
        self,
        fn: Callable[[np.ndarray], float],
        batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        known_minimizer: Optional[Sequence[float]] = None,
        known_minimum_value: Optional[float] = None,
    ):
        self.fn = fn
        self.batch_fn = batch_fn
        self.known_minimizer = None if known_minimizer is None else np.asarray(known_minimizer, dtype=float)
        self.known_minimum_value = known_minimum_value
        self.eval_count = 0
        self._lock = threading.Lock()

    def _bump(self, k: int) -> None:
        with self._lock:
            self.eval_count += k

    def __call__(self, x) -> float:
        value = float(self.fn(np.asarray(x, dtype=float)))
        self._bump(1)
        return value


def evaluate_batch(obj: ObjectiveHandle, points, workers: Optional[int] = None) -> np.ndarray:
    """Evaluate ``obj`` at every row of ``points``, preserving row order.

    With ``workers > 1`` rows are evaluated on a thread pool. Raises
    :class:`EvaluationError` carrying the row index of the first non-finite
    value.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError(f"points must be a 2-d array, got shape {points.shape}")
    n = points.shape[0]
    if n == 0:
        return np.empty(0)
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")

    parallel = workers is not None and workers > 1
    if obj.batch_fn is not None:
        if parallel:
            chunks = np.array_split(points, min(workers, n))
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda c: np.asarray(obj.batch_fn(c), dtype=float).reshape(-1), chunks))
            values = np.concatenate(parts)
        else:
            values = np.asarray(obj.batch_fn(points), dtype=float).reshape(-1)
        if values.shape[0] != n:
            raise ValueError(f"batch objective returned {values.shape[0]} values for {n} points")
    elif parallel:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.fromiter(pool.map(lambda row: float(obj.fn(row)), points), dtype=float, count=n)
    else:
        values = np.fromiter((float(obj.fn(row)) for row in points), dtype=float, count=n)
    obj._bump(n)

    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise EvaluationError(f"objective returned {values[i]} at row {i}", index=i)
    return values


@dataclass(frozen=True)
class InitSpec:
    kind: str = "uniform_box"
    lower: Optional[tuple] = None
    upper: Optional[tuple] = None
    mean: Optional[tuple] = None
    stddev: float = 1.0

    @classmethod
    def uniform_box(cls, lower, upper) -> "InitSpec":
        return cls("uniform_box", lower=tuple(map(float, lower)), upper=tuple(map(float, upper)))

    @classmethod
    def gaussian(cls, mean, stddev) -> "InitSpec":
        return cls("gaussian", mean=tuple(map(float, mean)), stddev=float(stddev))

    def resolved(self, d: int) -> "InitSpec":
        """Fill unset vectors with the defaults (box [-3, 3]^d, mean 0)."""
        if self.kind == "uniform_box":
            lower = self.lower if self.lower is not None else (-3.0,) * d
            upper = self.upper if self.upper is not None else (3.0,) * d
            return replace(self, lower=tuple(map(float, lower)), upper=tuple(map(float, upper)), mean=None)
        mean = self.mean if self.mean is not None else (0.0,) * d
        return replace(self, mean=tuple(map(float, mean)), lower=None, upper=None)

    def validate(self, d: int) -> None:
        if self.kind == "uniform_box":
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            if lo.shape != (d,) or hi.shape != (d,):
                raise ConfigError(f"box bounds must have length {d}", key="init.lower")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ConfigError("box bounds must be finite", key="init.lower")
            if np.any(lo > hi):
                k = int(np.flatnonzero(lo > hi)[0])
                raise ConfigError(f"lower[{k}] = {lo[k]} exceeds upper[{k}] = {hi[k]}", key="init.lower")
        elif self.kind == "gaussian":
            if len(self.mean) != d:
                raise ConfigError(f"mean must have length {d}", key="init.mean")
            if not (math.isfinite(self.stddev) and self.stddev >= 0):
                raise ConfigError(f"stddev must be finite and nonnegative, got {self.stddev}", key="init.stddev")
        else:
            raise ConfigError(f"unknown init kind {self.kind!r}", key="init.kind")


@dataclass(frozen=True)
class TerminationSpec:
    max_iterations: int = 1000
    max_evals: Optional[int] = None
    diameter_tol: Optional[float] = None
    consensus_stall: Optional[tuple] = None  # (window, tol)

    def validate(self) -> None:
        if isinstance(self.max_iterations, bool) or not isinstance(self.max_iterations, int) or self.max_iterations < 0:
            raise ConfigError("max_iterations must be a nonnegative integer", key="max_iterations")
        if self.max_evals is not None and (not isinstance(self.max_evals, int) or self.max_evals < 1):
            raise ConfigError("max_evals must be a positive integer", key="max_evals")
        if self.diameter_tol is not None and not self.diameter_tol >= 0:
            raise ConfigError("diameter_tol must be nonnegative", key="diameter_tol")
        if self.consensus_stall is not None:
            window, tol = self.consensus_stall
            if not isinstance(window, int) or window < 1 or not tol >= 0:
                raise ConfigError("consensus_stall needs a positive window and nonnegative tol", key="consensus_stall")


@dataclass(frozen=True)
class CbxConfig:
    """Complete description of one consensus-based run.

    ``memory_drift`` and ``memory_sigma`` default to ``0.4 * lam`` and
    ``sigma``; they are resolved at construction so the stored config is
    always explicit.
    """

    dimension: int
    n_particles: int = 50
    variant: str = "cbo"
    alpha: float = 1e4
    lam: float = 1.0
    sigma: float = 1.0
    dt: float = 0.1
    noise: str = "isotropic"
    batch_size: Optional[int] = None
    kernel_width: float = 1.0
    memory_drift: Optional[float] = None
    memory_sigma: Optional[float] = None
    cbs_mode: str = "sampling"
    init: InitSpec = field(default_factory=InitSpec)
    termination: TerminationSpec = field(default_factory=TerminationSpec)
    seed: int = 0

    def __post_init__(self):
        if self.memory_drift is None:
            object.__setattr__(self, "memory_drift", 0.4 * self.lam)
        if self.memory_sigma is None:
            object.__setattr__(self, "memory_sigma", self.sigma)
        if isinstance(self.dimension, int) and not isinstance(self.dimension, bool) and self.dimension >= 1:
            object.__setattr__(self, "init", self.init.resolved(self.dimension))
        self.validate()

    def validate(self) -> None:
        def _int(name, lo):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < lo:
                raise ConfigError(f"must be an integer >= {lo}, got {v!r}", key=name)

        _int("dimension", 1)
        _int("n_particles", 1)
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}", key="variant")
        if self.noise not in NOISE_MODELS:
            raise ConfigError(f"unknown noise model {self.noise!r}", key="noise")
        if self.cbs_mode not in CBS_MODES:
            raise ConfigError(f"unknown cbs_mode {self.cbs_mode!r}", key="cbs_mode")
        # alpha = 0 is admitted as the uniform-weight limit
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"must be finite and >= 0, got {self.alpha}", key="alpha")
        for name in ("lam", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"must be finite and > 0, got {v}", key=name)
        for name in ("sigma", "memory_drift", "memory_sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"must be finite and >= 0, got {v}", key=name)
        if not self.kernel_width > 0:
            raise ConfigError(f"must be > 0, got {self.kernel_width}", key="kernel_width")
        if self.batch_size is not None:
            if isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int):
                raise ConfigError("must be an integer", key="batch_size")
            if not 1 <= self.batch_size <= self.n_particles:
                raise ConfigError(
                    f"must lie in [1, n_particles={self.n_particles}], got {self.batch_size}", key="batch_size"
                )
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"must be a 64-bit unsigned integer, got {self.seed!r}", key="seed")
        self.init.validate(self.dimension)
        self.termination.validate()


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    consensus: np.ndarray
    best_value: float
    diameter: float
    eval_count: int

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "consensus": [float(v) for v in self.consensus],
            "best_value": float(self.best_value),
            "diameter": float(self.diameter),
            "eval_count": self.eval_count,
        }


@dataclass(frozen=True)
class RunResult:
    """Outcome of a run.

    ``final_value`` is the lowest objective value observed during the run;
    the consensus point itself is not evaluated.
    """

    minimizer_estimate: np.ndarray
    final_value: float
    iterations: int
    eval_count: int
    stop_reason: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "minimizer_estimate": [float(v) for v in self.minimizer_estimate],
            "final_value": float(self.final_value),
            "iterations": self.iterations,
            "eval_count": self.eval_count,
            "stop_reason": self.stop_reason,
            "seed": self.seed,
        }


def init_ensemble(config: CbxConfig, rng_seed: Optional[int] = None, objective: Optional[ObjectiveHandle] = None) -> Ensemble:
    """Draw the initial ensemble from the ``init`` stream.

    For ``memory_cbo`` the personal bests start at the initial positions; their
    values are evaluated when ``objective`` is given and also cached as the
    current values.
    """
    seed = config.seed if rng_seed is None else rng_seed
    n, d = config.n_particles, config.dimension
    spec = config.init
    spec.validate(d)
    if spec.kind == "uniform_box":
        lower = np.asarray(spec.lower, dtype=float)
        upper = np.asarray(spec.upper, dtype=float)
        u = rng.uniform(seed, "init", 0, n, d)
        positions = lower + (upper - lower) * u
    else:
        z = rng.normal(seed, "init", 0, n, d)
        positions = np.asarray(spec.mean, dtype=float) + spec.stddev * z

    ensemble = Ensemble(positions)
    if config.variant == "memory_cbo":
        ensemble.personal_bests = positions.copy()
        if objective is not None:
            values = evaluate_batch(objective, positions)
            ensemble.values = values
            ensemble.personal_best_values = values.copy()
    return ensemble
