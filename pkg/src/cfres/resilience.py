"""Absorption/adaptation/recovery scoring and resilience-aware optimization.

The optimizer loop is scored per iteration: adaptation measures how close the
current candidate is to the desired performance, recovery measures elapsed
time against the deadline, and the deployed solution is the iterate with the
highest weighted score seen anywhere in the run, not the last one.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .channel import PilotConfig, estimation_quality
from .ppzf import PowerAllocation, evaluate, partition_users
from .sca import (
    DegenerateLinearizationError,
    ServiceTargets,
    SolverFailureError,
    SolverOptions,
    SubproblemInfeasibleError,
    initial_point,
    psi_omega,
    run_sca,
    sca_iterations,
)

__all__ = [
    "ResilienceWeights",
    "TraceRecord",
    "ResilienceTrace",
    "FixedClock",
    "WallClock",
    "absorption",
    "adaptation",
    "recovery",
    "overall",
    "score_records",
    "Algorithm1Result",
    "run_algorithm1",
    "TimelineResult",
    "run_outage_timeline",
]


@dataclass(frozen=True)
class ResilienceWeights:
    """Simplex weights over (absorption, adaptation, recovery)."""

    lambda1: float
    lambda2: float
    lambda3: float

    def __post_init__(self):
        lam = (self.lambda1, self.lambda2, self.lambda3)
        if any(v < 0 for v in lam):
            raise ValueError(f"resilience weights must be non-negative, got {lam}")
        if abs(sum(lam) - 1.0) > 1e-9:
            raise ValueError(f"resilience weights must sum to 1 (tolerance 1e-9), got {lam}")


def absorption(psi_at_t0: float) -> float:
    """1 - Psi at the outage instant; may be negative, no clamping."""
    if psi_at_t0 < 0:
        raise ValueError(f"psi must be non-negative, got {psi_at_t0}")
    return 1.0 - psi_at_t0


def adaptation(psi_at_tn: float) -> float:
    """1 - Psi at the candidate produced at time t_n (true performance)."""
    if psi_at_tn < 0:
        raise ValueError(f"psi must be non-negative, got {psi_at_tn}")
    return 1.0 - psi_at_tn


def recovery(t_n: float, t_0: float, t_d: float) -> float:
    """1 within the deadline, then the ratio T_d / (t_n - t_0); range (0, 1]."""
    if t_d <= 0:
        raise ValueError(f"desired recovery time must be positive, got {t_d}")
    if t_n < t_0:
        raise ValueError(f"t_n={t_n} precedes t_0={t_0}")
    elapsed = t_n - t_0
    return 1.0 if elapsed <= t_d else t_d / elapsed


def overall(alpha_abs: float, alpha_ada: float, alpha_rec: float,
            w: ResilienceWeights) -> float:
    """Weighted sum of the three scores."""
    return w.lambda1 * alpha_abs + w.lambda2 * alpha_ada + w.lambda3 * alpha_rec


@dataclass(frozen=True)
class TraceRecord:
    """One scored iteration of the recovery run."""

    iteration: int
    t_ms: float
    psi: float
    alpha_ada: float
    alpha_rec: float
    alpha_overall: float
    is_best: bool = False


@dataclass(frozen=True)
class ResilienceTrace:
    """Timestamped record of one recovery run."""

    t0_ms: float
    t_d_ms: float
    alpha_abs: float
    records: tuple
    best_index: int            # position in records of the argmax score; -1 if empty
    failure: str = ""          # annotation when the run stopped early

    def __post_init__(self):
        ts = [r.t_ms for r in self.records]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("record timestamps must be strictly increasing")


def score_records(psi_seq, times_ms, alpha_abs, w: ResilienceWeights,
                  t0_ms: float, t_d_ms: float):
    """Score a Psi sequence and mark the argmax record (earliest on ties)."""
    records = []
    best_idx, best_score = -1, -np.inf
    for i, (psi, t_n) in enumerate(zip(psi_seq, times_ms)):
        a_ada = adaptation(psi)
        a_rec = recovery(t_n, t0_ms, t_d_ms)
        a_all = overall(alpha_abs, a_ada, a_rec, w)
        records.append(TraceRecord(iteration=i + 1, t_ms=float(t_n), psi=float(psi),
                                   alpha_ada=a_ada, alpha_rec=a_rec, alpha_overall=a_all))
        if a_all > best_score:
            best_idx, best_score = i, a_all
    if best_idx >= 0:
        records[best_idx] = replace(records[best_idx], is_best=True)
    return records, best_idx


class FixedClock:
    """Deterministic clock: each tick advances by a fixed step from the origin."""

    def __init__(self, origin_ms: float = 0.0, step_ms: float = 100.0):
        if step_ms <= 0:
            raise ValueError("step_ms must be positive")
        self.origin_ms = float(origin_ms)
        self.step_ms = float(step_ms)
        self._n = 0

    def tick(self) -> float:
        self._n += 1
        return self.origin_ms + self._n * self.step_ms


class WallClock:
    """Honest hardware clock, measured from the moment recovery starts."""

    def __init__(self, origin_ms: float = 0.0):
        self.origin_ms = float(origin_ms)
        self._start = None

    def tick(self) -> float:
        now = time.perf_counter()
        if self._start is None:
            self._start = now
        return self.origin_ms + (now - self._start) * 1e3


@dataclass
class Algorithm1Result:
    best_alloc: PowerAllocation
    trace: ResilienceTrace
    allocations: dict          # iteration -> PowerAllocation (deployable candidates)
    best_point_psi: float


def run_algorithm1(stats, part, targets: ServiceTargets, p_max,
                   w: ResilienceWeights, n_max: int, t_d_ms: float, clock,
                   options: SolverOptions | None = None, attacked_user: int = 0,
                   psi_at_t0: float | None = None) -> Algorithm1Result:
    """Resilience-aware SCA: run n_max fixed iterations, score each candidate,
    and return the allocation with the best overall score.

    Every intermediate iterate is treated as deployable. A timestamp is taken
    at the top of each iteration; with the fixed clock iteration n lands at
    origin + n * step. On a solver failure the trace is truncated at the last
    good iteration and the best candidate so far is still returned.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    options = options or SolverOptions()
    init = initial_point(stats, part, p_max, options.epsilon_floor, attacked_user)
    if psi_at_t0 is None:
        psi_at_t0 = psi_omega(evaluate(init.alloc, stats, part, attacked_user), targets)
    alpha_abs = absorption(psi_at_t0)
    t0 = clock.origin_ms

    psi_seq, times, allocations = [], [], {}
    failure = ""
    it = sca_iterations(stats, part, targets, p_max, options, attacked_user, initial=init)
    for n in range(1, n_max + 1):
        t_n = clock.tick()
        try:
            _, point, report, psi = next(it)
        except (DegenerateLinearizationError, SolverFailureError,
                SubproblemInfeasibleError) as exc:
            failure = f"iteration {n}: {exc}"
            break
        psi_seq.append(psi)
        times.append(t_n)
        allocations[n] = point.alloc

    records, best_idx = score_records(psi_seq, times, alpha_abs, w, t0, t_d_ms)
    trace = ResilienceTrace(t0_ms=t0, t_d_ms=float(t_d_ms), alpha_abs=alpha_abs,
                            records=tuple(records), best_index=best_idx, failure=failure)
    if best_idx < 0:
        raise RuntimeError(f"no iteration succeeded: {failure}")
    best_alloc = allocations[records[best_idx].iteration]
    return Algorithm1Result(best_alloc=best_alloc, trace=trace,
                            allocations=allocations,
                            best_point_psi=records[best_idx].psi)


@dataclass
class TimelineResult:
    trace: ResilienceTrace
    steady_alloc: PowerAllocation
    psi_steady: float          # QoS part of the objective before the attack
    psi_at_t0: float           # full objective at t0 with the held allocation
    best_alloc: PowerAllocation
    allocations: dict


def run_outage_timeline(drop, pilots_preattack: PilotConfig, pilots_attack: PilotConfig,
                        m_antennas: int, targets: ServiceTargets, p_max,
                        w: ResilienceWeights, n_max: int, t_d_ms: float, clock,
                        threshold_fraction: float = 0.1,
                        options: SolverOptions | None = None,
                        steady_n_max: int = 50) -> TimelineResult:
    """Steady state, outage at t0, then resilience-aware recovery.

    Phase 1 optimizes a pure QoS objective (the secrecy term is undefined
    without the eavesdropper) and converges to the pre-attack allocation.
    At t0 the attack switches on, the estimation quality degrades, and the
    held allocation is scored: alpha_abs = 1 - Psi(t0). The recorded
    steady-state Psi keeps the configured omega2 coefficient with the secrecy
    term dropped, so Psi(t0) >= Psi(steady) whenever omega1 > 0. Phase 2 runs
    the resilience-aware loop from the even-power initial point.
    """
    if pilots_preattack.p_eve != 0:
        raise ValueError("pre-attack pilot config must have p_eve = 0")
    if pilots_attack.p_eve <= 0:
        raise ValueError("attack pilot config must have p_eve > 0")
    options = options or SolverOptions()
    attacked = pilots_attack.attacked_user

    stats_pre = estimation_quality(drop, pilots_preattack)
    stats_att = estimation_quality(drop, pilots_attack)

    # the partition comes from beta only, so it is shared across the outage
    part = partition_users(stats_pre, m_antennas, threshold_fraction)

    qos_targets = ServiceTargets(sse_des=targets.sse_des, se_des=targets.se_des,
                                 se_min=targets.se_min, omega1=0.0, omega2=1.0)
    steady = run_sca(stats_pre, part, qos_targets, p_max, options,
                     attacked_user=attacked, n_max=steady_n_max)
    steady_alloc = steady.point.alloc

    # steady-state gap with the configured omega2 weight and no secrecy term
    psi_steady = targets.omega2 * steady.psi_history[-1]

    report_t0 = evaluate(steady_alloc, stats_att, part, attacked)
    psi_at_t0 = psi_omega(report_t0, targets)

    phase2 = run_algorithm1(stats_att, part, targets, p_max, w, n_max, t_d_ms, clock,
                            options=options, attacked_user=attacked,
                            psi_at_t0=psi_at_t0)
    return TimelineResult(trace=phase2.trace, steady_alloc=steady_alloc,
                          psi_steady=psi_steady, psi_at_t0=psi_at_t0,
                          best_alloc=phase2.best_alloc, allocations=phase2.allocations)
