"""Step rules for every variant and the iteration driver.

One iteration computes consensus from the pre-step ensemble, moves all
particles synchronously, then evaluates the objective once at every new
position. Those values are reused for the next consensus, the trace and the
personal-best bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from . import rng
from .consensus import (
    consensus_point,
    polarized_consensus,
    sym_matrix_sqrt,
    weighted_covariance,
)
from .core import (
    CbxConfig,
    ConfigError,
    Ensemble,
    EvaluationError,
    NumericalError,
    ObjectiveHandle,
    RunResult,
    TraceRecord,
    evaluate_batch,
    init_ensemble,
)
from .termination import check_termination


@dataclass
class StepContext:
    """Per-iteration scratch: the iteration index and the batch partition.

    ``batches`` holds sorted index arrays; ``batch_of[i]`` is the batch id of
    particle ``i``.
    """

    iteration: int
    batches: List[np.ndarray]
    batch_of: np.ndarray


def full_batch(n: int, iteration: int = 0) -> StepContext:
    return StepContext(iteration, [np.arange(n)], np.zeros(n, dtype=int))


def partition_batches(n: int, batch_size: int, seed: int, iteration: int = 0) -> StepContext:
    """Split a random permutation of ``range(n)`` into chunks of ``batch_size``.

    The permutation is the stable argsort of per-index uniforms from the
    ``batch`` stream, so it is fixed by ``(seed, iteration)``. A remainder of
    ``n % batch_size`` indices forms a final short batch. Indices inside each
    batch are sorted, which makes ``batch_size == n`` identical to a full
    batch.
    """
    if isinstance(batch_size, bool) or not isinstance(batch_size, (int, np.integer)) or not 1 <= batch_size <= n:
        raise ConfigError(f"batch_size must lie in [1, {n}], got {batch_size}", key="batch_size")
    keys = rng.uniform(seed, "batch", iteration, n, 1)[:, 0]
    perm = np.argsort(keys, kind="stable")
    batches = [np.sort(perm[i : i + batch_size]) for i in range(0, n, batch_size)]
    batch_of = np.empty(n, dtype=int)
    for b, idx in enumerate(batches):
        batch_of[idx] = b
    return StepContext(iteration, batches, batch_of)


def _diffusion(diff: np.ndarray, xi: np.ndarray, coeff: float, noise: str) -> np.ndarray:
    if noise == "anisotropic":
        scale = np.abs(diff)
    else:
        # sqrt(sum of squares) rather than np.linalg.norm: equals |v| exactly in 1-d
        scale = np.sqrt(np.sum(diff * diff, axis=1, keepdims=True))
    return coeff * scale * xi


def _batched(ctx: StepContext, fn: Callable, positions: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.empty_like(positions)
    for idx in ctx.batches:
        out[idx] = fn(positions[idx], values[idx])
    return out


def _values(ensemble: Ensemble, obj: ObjectiveHandle, workers) -> np.ndarray:
    if ensemble.values is None:
        ensemble.values = evaluate_batch(obj, ensemble.positions, workers)
    return ensemble.values


def _finish(new_positions: np.ndarray, obj: ObjectiveHandle, ctx: StepContext, workers) -> Ensemble:
    if not np.all(np.isfinite(new_positions)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(new_positions), axis=1))[0])
        raise NumericalError(
            f"non-finite position for particle {bad} at iteration {ctx.iteration}", iteration=ctx.iteration
        )
    return Ensemble(new_positions, evaluate_batch(obj, new_positions, workers))


def _cbo_move(x, centers, config: CbxConfig, ctx: StepContext) -> np.ndarray:
    n, d = x.shape
    xi = rng.normal(config.seed, "noise", ctx.iteration, n, d)
    diff = x - centers
    return x - config.lam * config.dt * diff + _diffusion(diff, xi, config.sigma * math.sqrt(config.dt), config.noise)


def cbo_step(ensemble: Ensemble, obj: ObjectiveHandle, config: CbxConfig, ctx: StepContext, workers=None) -> Ensemble:
    """Euler-Maruyama step towards each particle's batch consensus point."""
    values = _values(ensemble, obj, workers)
    x = ensemble.positions
    centers = _batched(ctx, lambda xb, vb: consensus_point(xb, vb, config.alpha).point, x, values)
    return _finish(_cbo_move(x, centers, config, ctx), obj, ctx, workers)


def polarized_step(
    ensemble: Ensemble, obj: ObjectiveHandle, config: CbxConfig, ctx: StepContext, workers=None
) -> Ensemble:
    """As :func:`cbo_step`, but every particle follows its own kernel-localised consensus."""
    values = _values(ensemble, obj, workers)
    x = ensemble.positions
    centers = _batched(
        ctx, lambda xb, vb: polarized_consensus(xb, vb, config.alpha, config.kernel_width).point, x, values
    )
    return _finish(_cbo_move(x, centers, config, ctx), obj, ctx, workers)


def memory_step(ensemble: Ensemble, obj: ObjectiveHandle, config: CbxConfig, ctx: StepContext, workers=None) -> Ensemble:
    """Step with consensus over personal bests and an extra pull towards them.

    The personal best of a particle is replaced only when its new value is
    strictly lower.
    """
    if ensemble.personal_bests is None or ensemble.personal_best_values is None:
        raise ConfigError("memory_cbo needs personal-best state on the ensemble", key="variant")
    _values(ensemble, obj, workers)
    x = ensemble.positions
    y, yv = ensemble.personal_bests, ensemble.personal_best_values
    n, d = x.shape

    centers = _batched(ctx, lambda yb, vb: consensus_point(yb, vb, config.alpha).point, y, yv)
    xi = rng.normal(config.seed, "noise", ctx.iteration, n, d)
    xi_mem = rng.normal(config.seed, "memory_noise", ctx.iteration, n, d)
    diff = x - centers
    diff_mem = x - y
    sq_dt = math.sqrt(config.dt)
    new_x = (
        x
        - config.lam * config.dt * diff
        - config.memory_drift * config.dt * diff_mem
        + _diffusion(diff, xi, config.sigma * sq_dt, config.noise)
        + _diffusion(diff_mem, xi_mem, config.memory_sigma * sq_dt, config.noise)
    )
    out = _finish(new_x, obj, ctx, workers)

    better = out.values < yv
    new_y = y.copy()
    new_yv = yv.copy()
    new_y[better] = out.positions[better]
    new_yv[better] = out.values[better]
    out.personal_bests = new_y
    out.personal_best_values = new_yv
    return out


def cbs_step(ensemble: Ensemble, obj: ObjectiveHandle, config: CbxConfig, ctx: StepContext, workers=None) -> Ensemble:
    """Exponential-integrator step of consensus-based sampling (always full batch).

    The noise is scaled by the symmetric root of the weighted covariance and
    by ``1 + alpha`` in sampling mode (``1`` in optimization mode).
    """
    values = _values(ensemble, obj, workers)
    x = ensemble.positions
    n, d = x.shape
    cons = consensus_point(x, values, config.alpha)
    cov = weighted_covariance(x, cons.weights, cons.point)
    root = sym_matrix_sqrt(cov)
    beta = 1.0 + config.alpha if config.cbs_mode == "sampling" else 1.0
    decay = math.exp(-config.dt)
    noise_coeff = math.sqrt(beta * (1.0 - math.exp(-2.0 * config.dt)))
    xi = rng.normal(config.seed, "noise", ctx.iteration, n, d)
    new_x = cons.point + decay * (x - cons.point) + noise_coeff * (xi @ root)
    return _finish(new_x, obj, ctx, workers)


STEPS = {
    "cbo": cbo_step,
    "polarized_cbo": polarized_step,
    "memory_cbo": memory_step,
    "cbs": cbs_step,
}


def ensemble_diameter(positions: np.ndarray) -> float:
    if positions.shape[0] < 2:
        return 0.0
    return float(pdist(positions).max())


def reported_consensus(ensemble: Ensemble, config: CbxConfig) -> np.ndarray:
    """Single consensus vector used for traces and as the run's estimate.

    Polarized runs report the mean of the per-particle points; memory runs
    report the consensus of the personal bests.
    """
    if config.variant == "memory_cbo":
        return consensus_point(ensemble.personal_bests, ensemble.personal_best_values, config.alpha).point
    if config.variant == "polarized_cbo":
        return polarized_consensus(ensemble.positions, ensemble.values, config.alpha, config.kernel_width).point.mean(
            axis=0
        )
    return consensus_point(ensemble.positions, ensemble.values, config.alpha).point


class Stepper:
    """Manually driven run.

    Construction draws (or accepts) the initial ensemble and evaluates it;
    each :meth:`step` advances one iteration and appends a trace record.

    >>> from cbxopt.core import CbxConfig, ObjectiveHandle
    >>> s = Stepper(CbxConfig(dimension=2, n_particles=10), ObjectiveHandle(lambda x: x @ x))
    >>> rec = s.step()
    >>> rec.iteration, s.eval_count
    (1, 20)
    """

    def __init__(
        self,
        config: CbxConfig,
        objective: ObjectiveHandle,
        positions: Optional[np.ndarray] = None,
        workers: Optional[int] = None,
    ):
        self.config = config
        self.objective = objective
        self.workers = workers
        self._start_evals = objective.eval_count
        if positions is None:
            self.ensemble = init_ensemble(config, config.seed, objective)
        else:
            positions = np.array(positions, dtype=float)
            if positions.shape != (config.n_particles, config.dimension):
                raise ConfigError(
                    f"positions must have shape {(config.n_particles, config.dimension)}, got {positions.shape}",
                    key="positions",
                )
            self.ensemble = Ensemble(positions)
            if config.variant == "memory_cbo":
                self.ensemble.personal_bests = positions.copy()
        if self.ensemble.values is None:
            self.ensemble.values = evaluate_batch(objective, self.ensemble.positions, workers)
        if config.variant == "memory_cbo" and self.ensemble.personal_best_values is None:
            self.ensemble.personal_best_values = self.ensemble.values.copy()

        self.iteration = 0
        self.trace: List[TraceRecord] = []
        self.best_value = float(self.ensemble.values.min())
        self.consensus = reported_consensus(self.ensemble, config)
        self.stop_reason: Optional[str] = None

    @property
    def eval_count(self) -> int:
        return self.objective.eval_count - self._start_evals

    def context(self, iteration: int) -> StepContext:
        cfg = self.config
        if cfg.variant == "cbs" or cfg.batch_size is None or cfg.batch_size == cfg.n_particles:
            return full_batch(cfg.n_particles, iteration)
        return partition_batches(cfg.n_particles, cfg.batch_size, cfg.seed, iteration)

    def step(self) -> TraceRecord:
        t = self.iteration + 1
        step_fn = STEPS[self.config.variant]
        # overflow surfaces as NumericalError from the finiteness check instead
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                self.ensemble = step_fn(self.ensemble, self.objective, self.config, self.context(t), self.workers)
        except EvaluationError as exc:
            exc.iteration = t
            raise
        self.iteration = t
        self.best_value = min(self.best_value, float(self.ensemble.values.min()))
        self.consensus = reported_consensus(self.ensemble, self.config)
        record = TraceRecord(
            iteration=t,
            consensus=self.consensus,
            best_value=self.best_value,
            diameter=ensemble_diameter(self.ensemble.positions),
            eval_count=self.eval_count,
        )
        self.trace.append(record)
        return record

    def run(self, callback: Optional[Callable[[TraceRecord], None]] = None) -> RunResult:
        """Step until a termination criterion fires."""
        if self.config.termination.max_iterations == 0:
            self.stop_reason = "max_iterations"
        while self.stop_reason is None:
            record = self.step()
            if callback is not None:
                callback(record)
            self.stop_reason = check_termination(self.config.termination, self.trace)
        return self.result()

    def result(self) -> RunResult:
        return RunResult(
            minimizer_estimate=np.array(self.consensus),
            final_value=self.best_value,
            iterations=self.iteration,
            eval_count=self.eval_count,
            stop_reason=self.stop_reason if self.stop_reason is not None else "max_iterations",
            seed=self.config.seed,
        )


def iterate(
    config: CbxConfig,
    obj: ObjectiveHandle,
    workers: Optional[int] = None,
    callback: Optional[Callable[[TraceRecord], None]] = None,
) -> Tuple[RunResult, List[TraceRecord]]:
    """Run ``config`` on ``obj`` to termination and return the result with its trace."""
    stepper = Stepper(config, obj, workers=workers)
    result = stepper.run(callback)
    return result, stepper.trace


def minimize(f: Callable[[np.ndarray], float], dimension: int, **params) -> RunResult:
    """Minimise ``f`` over R^dimension with one call.

    Keyword arguments are :class:`~cbxopt.core.CbxConfig` fields;
    ``max_iterations`` is accepted as a shortcut for the termination spec.

    >>> res = minimize(lambda x: x[0] ** 2 + x[1] ** 2, dimension=2, max_iterations=200)
    >>> bool(abs(res.minimizer_estimate).max() < 1e-2)
    True
    """
    from dataclasses import replace

    max_iterations = params.pop("max_iterations", None)
    config = CbxConfig(dimension=dimension, **params)
    if max_iterations is not None:
        config = replace(config, termination=replace(config.termination, max_iterations=max_iterations))
    result, _ = iterate(config, ObjectiveHandle(f))
    return result
