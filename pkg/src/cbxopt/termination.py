"""Stopping criteria.

Criteria are checked in a fixed priority order, and the first one that fires
is reported: ``max_iterations``, ``max_evals``, ``diameter_tol``,
``consensus_stall``.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .core import TerminationSpec, TraceRecord


def check_termination(spec: TerminationSpec, trace: Sequence[TraceRecord]) -> Optional[str]:
    if not trace:
        raise ValueError("check_termination needs at least one trace record")
    last = trace[-1]
    if last.iteration >= spec.max_iterations:
        return "max_iterations"
    if spec.max_evals is not None and last.eval_count >= spec.max_evals:
        return "max_evals"
    if spec.diameter_tol is not None and last.diameter <= spec.diameter_tol:
        return "diameter_tol"
    if spec.consensus_stall is not None:
        window, tol = spec.consensus_stall
        if len(trace) > window:
            moved = np.linalg.norm(np.asarray(last.consensus) - np.asarray(trace[-1 - window].consensus))
            if moved < tol:
                return "consensus_stall"
    return None
