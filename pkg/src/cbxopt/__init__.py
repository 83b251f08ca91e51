"""Consensus-based derivative-free optimisation and sampling."""

from .bench import BenchReport, NamedObjective, make_objective, run_benchmark
from .consensus import (
    ConsensusResult,
    consensus_point,
    log_weights,
    polarized_consensus,
    sym_matrix_sqrt,
    weighted_covariance,
)
from .core import (
    CbxConfig,
    CbxError,
    ConfigError,
    Ensemble,
    EvaluationError,
    InitSpec,
    NumericalError,
    ObjectiveHandle,
    RunResult,
    TerminationSpec,
    TraceRecord,
    evaluate_batch,
    init_ensemble,
)
from .dynamics import (
    Stepper,
    StepContext,
    cbo_step,
    cbs_step,
    iterate,
    memory_step,
    minimize,
    partition_batches,
    polarized_step,
)
from .rng import rng_draw
from .termination import check_termination

__version__ = "0.1.0"
