"""Gibbs-weighted consensus computations.

All weights are formed in log space and shifted by the best (lowest) value
before exponentiation, so they never overflow regardless of ``alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ConfigError, Ensemble

SYMMETRY_TOL = 1e-10


@dataclass
class ConsensusResult:
    point: np.ndarray
    weights: np.ndarray
    log_normalizer: float
    shift: float
    covariance: Optional[np.ndarray] = None


def _check_values(values) -> np.ndarray:
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("cannot weight an empty set of values")
    if not np.all(np.isfinite(values)):
        raise ValueError("objective values must be finite")
    return values


def _exponents(values, alpha):
    shift = float(values.min())
    with np.errstate(over="ignore"):
        expo = -alpha * (values - shift)
    # alpha * 0 stays 0, alpha * positive may overflow to +inf -> exp(-inf) = 0
    return expo, shift


def log_weights(values, alpha: float):
    """Normalised Gibbs weights ``exp(-alpha f_i)`` and the applied shift.

    Returns
    -------
    weights : ndarray
        Nonnegative, summing to one.
    shift : float
        ``min(values)``, subtracted before exponentiation.
    """
    if not alpha >= 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    values = _check_values(values)
    expo, shift = _exponents(values, alpha)
    w = np.exp(expo)
    return w / w.sum(), shift


def _log_normalizer(values, alpha) -> float:
    expo, _ = _exponents(values, alpha)
    return float(np.log(np.exp(expo).sum()))


def _clip_to_hull(point, positions):
    # rounding in the weighted sum can leave the hull by an ulp
    return np.clip(point, positions.min(axis=0), positions.max(axis=0))


def _positions(ensemble) -> np.ndarray:
    x = ensemble.positions if isinstance(ensemble, Ensemble) else ensemble
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"positions must be N x d, got shape {x.shape}")
    return x


def consensus_point(ensemble, values, alpha: float) -> ConsensusResult:
    """Weighted mean of the particle positions under Gibbs weights."""
    x = _positions(ensemble)
    values = _check_values(values)
    if values.shape[0] != x.shape[0]:
        raise ValueError(f"{values.shape[0]} values for {x.shape[0]} particles")
    weights, shift = log_weights(values, alpha)
    point = _clip_to_hull(weights @ x, x)
    return ConsensusResult(point, weights, _log_normalizer(values, alpha), shift)


def polarized_consensus(ensemble, values, alpha: float, kernel_width: float) -> ConsensusResult:
    """Per-particle consensus points localised by a Gaussian kernel.

    Row ``i`` of ``point`` is the Gibbs-weighted mean of all particles, each
    further weighted by ``exp(-|x_i - x_j|^2 / (2 kernel_width^2))``. An
    infinite ``kernel_width`` reproduces :func:`consensus_point` for every row.
    ``weights`` holds the N x N row-normalised weight matrix.
    """
    if not kernel_width > 0:
        raise ConfigError(f"kernel_width must be positive, got {kernel_width}", key="kernel_width")
    x = _positions(ensemble)
    values = _check_values(values)
    if values.shape[0] != x.shape[0]:
        raise ValueError(f"{values.shape[0]} values for {x.shape[0]} particles")

    expo, shift = _exponents(values, alpha)
    if np.isinf(kernel_width):
        logits = np.broadcast_to(expo, (x.shape[0], x.shape[0]))
    else:
        diff = x[:, None, :] - x[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        logits = expo[None, :] - sq / (2.0 * kernel_width**2)
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    lo, hi = x.min(axis=0), x.max(axis=0)
    points = np.clip(w @ x, lo, hi)
    return ConsensusResult(points, w, _log_normalizer(values, alpha), shift)


def weighted_covariance(ensemble, weights, center) -> np.ndarray:
    """``sum_i w_i (x_i - c)(x_i - c)^T`` without any small-sample correction."""
    x = _positions(ensemble)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    center = np.asarray(center, dtype=float).reshape(-1)
    if weights.shape[0] != x.shape[0] or center.shape[0] != x.shape[1]:
        raise ValueError("shape mismatch between ensemble, weights and center")
    dev = x - center
    cov = (dev * weights[:, None]).T @ dev
    return 0.5 * (cov + cov.T)


def sym_matrix_sqrt(C) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Negative eigenvalues from rounding are clamped to zero.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {C.shape}")
    asym = np.max(np.abs(C - C.T)) if C.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(C))) if C.size else 1.0):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    C = 0.5 * (C + C.T)
    evals, evecs = np.linalg.eigh(C)
    root = np.sqrt(np.clip(evals, 0.0, None))
    S = (evecs * root) @ evecs.T
    return 0.5 * (S + S.T)
