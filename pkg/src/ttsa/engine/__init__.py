"""Generic two-time-scale stochastic approximation engine."""

from .driver import (
    BatchRandom,
    ReplicationResult,
    ReplicationSummary,
    log_checkpoints,
    run_replications,
    simulate_batch,
    tts_run,
)
from .problem import FixedPointOracle, TtsProblem
from .rates import RateFit, fit_rate, last_decades
from .schedule import StepSchedule
from .verify import (
    LipschitzReport,
    lyapunov_trace,
    martingale_mean_check,
    oracle_by_iteration,
    solve_x_star,
    verify_contraction,
    verify_xstar_lipschitz,
)

__all__ = [
    "BatchRandom", "FixedPointOracle", "LipschitzReport", "RateFit", "ReplicationResult",
    "ReplicationSummary", "StepSchedule", "TtsProblem", "fit_rate", "last_decades",
    "log_checkpoints", "lyapunov_trace", "martingale_mean_check", "oracle_by_iteration",
    "run_replications", "simulate_batch", "solve_x_star", "tts_run", "verify_contraction",
    "verify_xstar_lipschitz",
]
