"""Acceptance suite: one test per release criterion, one printed verdict line each.

Stochastic criteria run on pinned seeds; every tolerance is stated inline.
"""

import time

import numpy as np
import pytest

from cfres.channel import ChannelStatistics, PilotConfig, estimation_quality
from cfres.cli import grid_search_single_link
from cfres.ppzf import (
    PowerAllocation,
    oracle_expectations,
    partition_users,
    sinr_eve,
    sinr_eve_quad,
    sinr_user,
    sinr_user_quad,
)
from cfres.resilience import (
    FixedClock,
    ResilienceWeights,
    absorption,
    adaptation,
    overall,
    recovery,
    run_algorithm1,
    score_records,
)
from cfres.scenario import ScenarioConfig, generate_drop
from cfres.sca import (
    ServiceTargets,
    SolverOptions,
    f_d_lower_bound,
    f_d_value,
    initial_point,
    run_sca,
    sca_iterations,
    sinr_user_lower_bound,
)

PAPER_SEEDS = (11, 12, 13, 14, 15, 16, 17, 18, 19, 20)
DESCENT_SEEDS = (100, 102, 103, 104, 105, 108, 110, 111, 113, 114)


def verdict(name, passed, detail=""):
    print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert passed, f"{name}: {detail}"


def _paper_targets(K, omega):
    return ServiceTargets(sse_des=3.0, se_des=np.full(K, 5.0), se_min=np.full(K, 0.1),
                          omega1=omega[0], omega2=omega[1])


@pytest.fixture(scope="module")
def paper_scale_runs():
    """Recovery runs at the reference scale (L=40, M=4, K=10), N_max=50."""
    scen = ScenarioConfig()
    pilots = PilotConfig(tau_p=10, p_users=np.full(10, 100.0), p_eve=100.0)
    runs = {}
    t_start = time.time()
    for omega in [(0.2, 0.8), (0.5, 0.5), (0.8, 0.2)]:
        targets = _paper_targets(10, omega)
        per_seed = {}
        for seed in PAPER_SEEDS:
            drop = generate_drop(scen, seed)
            stats = estimation_quality(drop, pilots)
            part = partition_users(stats, 4, 0.1)
            res = run_algorithm1(stats, part, targets, 200.0,
                                 ResilienceWeights(0.0, 1.0, 0.0), n_max=50,
                                 t_d_ms=500.0, clock=FixedClock(500.0, 100.0),
                                 options=SolverOptions())
            per_seed[seed] = res.trace
        runs[omega] = per_seed
    runs["elapsed"] = time.time() - t_start
    return runs


# ---------------------------------------------------------------------------
# 1. expectation-oracle suite
# ---------------------------------------------------------------------------

def test_expectation_oracle_suite():
    t0 = time.time()
    scen = ScenarioConfig(L=2, M=4, K=3, seed=9)
    drop = generate_drop(scen, 9)
    pilots = PilotConfig(tau_p=3, p_users=np.full(3, 100.0), p_eve=100.0, attacked_user=0)
    stats = estimation_quality(drop, pilots)
    part = partition_users(stats, 4, 0.1)
    # both leakage regimes present: attacked user strong at one AP, weak at the other
    assert len(part.zf_aps[0]) and len(part.mrt_aps[0])
    rng = np.random.default_rng(19)
    rho = rng.uniform(0, 50.0, (2, 3))
    alloc = PowerAllocation(u_users=np.sqrt(rho), u_an=np.sqrt(rng.uniform(0, 50.0, 2)))
    report = oracle_expectations(stats, part, alloc, pilots, 100_000, seed=20)
    elapsed = time.time() - t0
    bad = report.failures()
    worst = max((abs(t.estimate - t.closed_form) / t.std_error
                 for t in report.terms if t.std_error > 0), default=0.0)
    verdict("expectation-oracle (5 sigma at 1e5 samples)",
            not bad and elapsed < 60.0,
            f"{len(report.terms)} terms, worst {worst:.2f} sigma, {elapsed:.1f}s "
            f"(budget 60s)" + (f"; failures: {[t.name for t in bad]}" if bad else ""))


# ---------------------------------------------------------------------------
# 2. algebraic identities
# ---------------------------------------------------------------------------

def test_algebraic_identity_suite():
    t0 = time.time()
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(1000):
        L = int(rng.integers(1, 7))
        K = int(rng.integers(1, 7))
        beta = rng.uniform(0.01, 3.0, (L, K))
        beta_e = rng.uniform(0.01, 3.0, L)
        stats = ChannelStatistics(
            beta_users=beta, beta_eve=beta_e,
            gamma_users=beta * rng.uniform(0.05, 0.98, (L, K)),
            gamma_eve=beta_e * rng.uniform(0.05, 0.98, L), eve_active=True)
        part = partition_users(stats, 4, float(rng.uniform(0.05, 1.0)))
        alloc = PowerAllocation(u_users=rng.uniform(0, 4, (L, K)), u_an=rng.uniform(0, 4, L))
        k = int(rng.integers(K))
        s1, s2 = sinr_user(k, alloc, stats, part), sinr_user_quad(k, alloc, stats, part)
        worst = max(worst, abs(s1 - s2) / max(abs(s1), 1e-30))
        e1, e2 = sinr_eve(alloc, stats, part, 0), sinr_eve_quad(alloc, stats, part, 0)
        worst = max(worst, abs(e1 - e2) / max(abs(e1), 1e-30))
    elapsed = time.time() - t0
    verdict("algebraic-identity (scalar vs vectorized SINR, 1e3 inputs)",
            worst <= 1e-12 and elapsed < 5.0,
            f"worst relative gap {worst:.2e} (tol 1e-12), {elapsed:.1f}s (budget 5s)")


# ---------------------------------------------------------------------------
# 3. surrogate validity
# ---------------------------------------------------------------------------

def test_surrogate_validity_suite():
    t0 = time.time()
    scen = ScenarioConfig(L=8, M=4, K=4, seed=21)
    drop = generate_drop(scen, 21)
    pilots = PilotConfig(tau_p=4, p_users=np.full(4, 100.0), p_eve=100.0)
    stats = estimation_quality(drop, pilots)
    part = partition_users(stats, 4, 0.1)
    p_max = 200.0
    point = initial_point(stats, part, p_max)

    # tightness at the expansion point
    tight = max(abs(sinr_user_lower_bound(k, point.alloc, point, stats, part)
                    - point.x[k] ** 2 / point.phi[k]) for k in range(4))
    tight = max(tight, abs(f_d_lower_bound(point.alloc, point, stats, part, 0) - point.f_d))

    rng = np.random.default_rng(31)
    worst_sinr, worst_fd = -np.inf, -np.inf
    for _ in range(1000):
        u = rng.uniform(0, 1, (8, 5))
        u = u / np.linalg.norm(u, axis=1, keepdims=True) * np.sqrt(p_max) \
            * rng.uniform(0.1, 1.0, (8, 1))
        alloc = PowerAllocation(u_users=u[:, :4], u_an=u[:, 4])
        k = int(rng.integers(4))
        worst_sinr = max(worst_sinr,
                         sinr_user_lower_bound(k, alloc, point, stats, part)
                         - sinr_user(k, alloc, stats, part))
        worst_fd = max(worst_fd, f_d_lower_bound(alloc, point, stats, part, 0)
                       - f_d_value(alloc, stats, part, 0))
    elapsed = time.time() - t0
    verdict("surrogate-validity (global bounds + tightness)",
            tight <= 1e-8 and worst_sinr <= 1e-9 and worst_fd <= 1e-9 and elapsed < 10.0,
            f"tightness {tight:.2e} (tol 1e-8), max SINR_lb excess {worst_sinr:.2e}, "
            f"max f_D_lb excess {worst_fd:.2e} (tol 1e-9), {elapsed:.1f}s (budget 10s)")


# ---------------------------------------------------------------------------
# 4. SCA descent
# ---------------------------------------------------------------------------

def test_sca_descent():
    t0 = time.time()
    scen = ScenarioConfig(L=10, M=4, K=5)
    pilots = PilotConfig(tau_p=5, p_users=np.full(5, 100.0), p_eve=100.0)
    targets = _paper_targets(5, (0.5, 0.5))
    worst = -np.inf
    for seed in DESCENT_SEEDS:
        drop = generate_drop(scen, seed)
        stats = estimation_quality(drop, pilots)
        part = partition_users(stats, 4, 0.1)
        psis = []
        for n, _, _, psi in sca_iterations(stats, part, targets, 200.0, SolverOptions()):
            psis.append(psi)
            if n >= 30:
                break
        worst = max(worst, float(np.max(np.diff(psis))))
    elapsed = time.time() - t0
    verdict("sca-descent (30 iterations x 10 drops)",
            worst <= 1e-6 and elapsed < 300.0,
            f"max psi increase {worst:.2e} (tol 1e-6), {elapsed:.0f}s (budget 300s)")


# ---------------------------------------------------------------------------
# 5. grid-oracle equivalence
# ---------------------------------------------------------------------------

def test_grid_oracle_equivalence():
    t0 = time.time()
    scen = ScenarioConfig(L=1, M=4, K=1)
    drop = generate_drop(scen, 6)
    pilots = PilotConfig(tau_p=10, p_users=np.array([100.0]), p_eve=100.0)
    stats = estimation_quality(drop, pilots)
    part = partition_users(stats, 4, 0.1)
    targets = ServiceTargets(sse_des=3.0, se_des=np.array([5.0]), se_min=np.array([0.1]),
                             omega1=1.0, omega2=0.0)
    psi_grid, rho1, rho_an = grid_search_single_link(stats, part, 200.0, targets, 1e-3)
    res = run_sca(stats, part, targets, 200.0, SolverOptions(), n_max=60)
    psi_sca = res.psi_history[-1]
    gap = abs(psi_sca - psi_grid) / max(psi_grid, 1e-12)
    elapsed = time.time() - t0
    verdict("grid-oracle equivalence (K=1, L=1, omega=(1,0))",
            gap <= 0.01 and elapsed < 120.0,
            f"grid {psi_grid:.6f} at (rho1={rho1:.1f}, rho_an={rho_an:.1f}) vs "
            f"sca {psi_sca:.6f}, gap {gap:.2e} (tol 1e-2), {elapsed:.0f}s (budget 120s)")


# ---------------------------------------------------------------------------
# 6. reference-scale adaptation endpoint
# ---------------------------------------------------------------------------

def test_adaptation_endpoint_reference_scale(paper_scale_runs):
    means = {}
    ok = True
    for omega in [(0.2, 0.8), (0.5, 0.5), (0.8, 0.2)]:
        finals = []
        for seed in PAPER_SEEDS:
            trace = paper_scale_runs[omega][seed]
            assert not trace.failure, f"seed {seed} failed: {trace.failure}"
            finals.append(trace.records[-1].alpha_ada)
        means[omega] = float(np.mean(finals))
        ok &= means[omega] >= 0.9
    elapsed = paper_scale_runs["elapsed"]
    ok &= elapsed < 1800.0
    verdict("adaptation endpoint (L=40, M=4, K=10, 10 drops, N_max=50)",
            ok,
            "mean final alpha_ada " +
            ", ".join(f"omega={o}: {m:.4f}" for o, m in means.items()) +
            f" (floor 0.9), {elapsed:.0f}s (budget 1800s)")


# ---------------------------------------------------------------------------
# 7. long-run score levels under the deterministic clock
# ---------------------------------------------------------------------------

def test_longrun_levels_deterministic_clock(paper_scale_runs):
    trace = paper_scale_runs[(0.5, 0.5)][PAPER_SEEDS[0]]
    psis = [r.psi for r in trace.records]
    times = [r.t_ms for r in trace.records]
    t0, td = 500.0, 500.0
    ada_final = 1.0 - psis[-1]

    rec_a, _ = score_records(psis, times, 1.0, ResilienceWeights(0.0, 0.9, 0.1), t0, td)
    tail = [r for r in rec_a if r.t_ms - t0 >= 4000.0]
    dev_a = max(abs(r.alpha_overall - 0.9 * ada_final) for r in tail)

    rec_b, best_b = score_records(psis, times, 1.0, ResilienceWeights(0.0, 0.1, 0.9), t0, td)
    peak_in_deadline = rec_b[best_b].t_ms <= t0 + td
    decay = [r for r in rec_b if r.t_ms - t0 > td]
    dev_b = max(abs(r.alpha_overall - (0.1 * ada_final + 0.9 * td / (r.t_ms - t0)))
                for r in decay)

    verdict("long-run levels (100 ms/iter, T0=500 ms, T_d=500 ms)",
            dev_a <= 0.05 and peak_in_deadline and dev_b <= 0.02,
            f"lambda=(0,0.9,0.1) tail dev {dev_a:.4f} (tol 0.05); "
            f"lambda=(0,0.1,0.9) peak at {rec_b[best_b].t_ms:.0f} ms "
            f"(deadline {t0 + td:.0f}), decay dev {dev_b:.4f} (tol 0.02)")


# ---------------------------------------------------------------------------
# 8. best-iterate selection
# ---------------------------------------------------------------------------

def test_selection_properties(paper_scale_runs):
    # quality-only weights select the minimum-psi iterate on a real run
    trace = paper_scale_runs[(0.5, 0.5)][PAPER_SEEDS[1]]
    psis = [r.psi for r in trace.records]
    times = [r.t_ms for r in trace.records]
    _, best_q = score_records(psis, times, 0.7, ResilienceWeights(0.0, 1.0, 0.0),
                              500.0, 500.0)
    ok = best_q == int(np.argmin(psis))
    # and a huge deadline coincides with it
    _, best_t = score_records(psis, times, 0.7, ResilienceWeights(0.0, 0.5, 0.5),
                              500.0, 1e15)
    ok &= best_t == best_q

    # 20 scripted sequences against independently computed argmax scores
    rng = np.random.default_rng(77)
    all_match = True
    for _ in range(20):
        n = int(rng.integers(3, 40))
        psi = rng.uniform(0.0, 1.5, n)
        t0 = float(rng.uniform(0, 2000))
        step = float(rng.uniform(20, 300))
        ts = t0 + step * np.arange(1, n + 1)
        td = float(rng.uniform(50, 3000))
        lam = rng.dirichlet(np.ones(3))
        psi0 = float(rng.uniform(0, 1))
        _, best = score_records(psi, ts, 1 - psi0, ResilienceWeights(*lam), t0, td)
        scores = [lam[0] * (1 - psi0) + lam[1] * (1 - p)
                  + lam[2] * (1.0 if t - t0 <= td else td / (t - t0))
                  for p, t in zip(psi, ts)]
        all_match &= best == int(np.argmax(scores))
    verdict("algorithm-1 selection (min-psi at lambda3=0; 20 scripted argmax cases)",
            ok and all_match,
            f"min-psi match {ok}, scripted cases all match {all_match}")


# ---------------------------------------------------------------------------
# 9. resilience metric unit values
# ---------------------------------------------------------------------------

def test_resilience_metric_units():
    checks = [
        absorption(0.0) == 1.0,
        absorption(1.0) == 0.0,
        absorption(0.25) == 0.75,
        adaptation(0.02) == pytest.approx(0.98),
        adaptation(0.0) == 1.0,
        adaptation(2.0) == -1.0,
        recovery(750.0, 500.0, 500.0) == 1.0,
        recovery(1500.0, 500.0, 500.0) == 0.5,
        recovery(1000.0, 500.0, 500.0) == 1.0,   # boundary t - t0 = T_d inclusive
        overall(0.3, 0.7, 0.2, ResilienceWeights(0.0, 1.0, 0.0)) == 0.7,
        overall(0.0, 0.98, 1.0, ResilienceWeights(0.0, 0.5, 0.5)) == pytest.approx(0.99),
    ]
    simplex_rejected = False
    try:
        ResilienceWeights(0.2, 0.2, 0.2)
    except ValueError:
        simplex_rejected = True
    verdict("resilience-metric units (Eqs. for alpha_abs/ada/rec/overall)",
            all(checks) and simplex_rejected,
            f"{sum(checks)}/{len(checks)} exact values, simplex rejection {simplex_rejected}")
