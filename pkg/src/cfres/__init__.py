"""Secure cell-free massive MIMO downlinks under an active pilot attack:
closed-form secrecy/QoS evaluation, SCA power allocation, resilience scoring.
"""

from .scenario import NetworkDrop, ScenarioConfig, generate_drop, path_loss_db
from .channel import (
    ChannelRealization,
    ChannelStatistics,
    PilotConfig,
    estimation_quality,
    sample_realization,
)
from .ppzf import (
    PerformanceReport,
    PowerAllocation,
    UserPartition,
    build_precoders,
    evaluate,
    oracle_expectations,
    partition_users,
    sinr_eve,
    sinr_user,
)
from .sca import (
    IteratePoint,
    ServiceTargets,
    SolverOptions,
    build_subproblem,
    initial_point,
    psi_omega,
    run_sca,
    solve_subproblem,
)
from .resilience import (
    FixedClock,
    ResilienceTrace,
    ResilienceWeights,
    WallClock,
    absorption,
    adaptation,
    overall,
    recovery,
    run_algorithm1,
    run_outage_timeline,
)

__version__ = "0.1.0"
