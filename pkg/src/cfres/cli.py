"""Experiment orchestration: config files, runs, sweeps, presets, validation.

The config file is a YAML key-value tree (see README for the full grammar).
Units at this boundary: powers in mW, noise in dBm, times in ms. Conversion
into solver units happens exactly once, when the runtime objects are built.
"""

import argparse
import itertools
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .channel import PilotConfig, estimation_quality
from .ppzf import PowerAllocation, evaluate, oracle_expectations, partition_users
from .resilience import (
    FixedClock,
    ResilienceTrace,
    ResilienceWeights,
    TimelineResult,
    WallClock,
    run_outage_timeline,
    score_records,
)
from .scenario import ScenarioConfig, generate_drop
from .sca import (ServiceTargets, SolverOptions, SubproblemInfeasibleError, psi_omega,
                  run_sca)
from . import traces as tr

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "load_config",
    "run",
    "validate",
    "grid_search_single_link",
    "main",
]


class ConfigError(ValueError):
    """Config rejected; the message carries the offending key path."""


# ---------------------------------------------------------------------------
# config schema (defaults mirror the reference simulation setup)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PilotSettings:
    tau_p: int | None = None          # defaults to K
    p_user_mw: float = 100.0          # documented assumption, not fixed by the setup
    p_eve_mw: float = 100.0
    attacked_user: int = 1            # 1-based in config files


@dataclass(frozen=True)
class TargetSettings:
    sse_des: float = 3.0
    se_des: object = 5.0              # scalar or length-K list
    se_min: object = 0.1
    omega: tuple = (0.5, 0.5)


@dataclass(frozen=True)
class ResilienceSettings:
    lambda_: tuple = (0.0, 1.0, 0.0)
    t_d_ms: float = 500.0
    n_max: int = 50
    clock: str = "fixed"              # "fixed" or "wall"
    clock_step_ms: float = 100.0
    t0_ms: float = 500.0
    clamp_alpha: bool = False


@dataclass(frozen=True)
class SolverSettings:
    solver: str = "CLARABEL"
    fallback_solver: str = "SCS"
    inner_tol: float = 1e-8
    sca_tol: float = 1e-5
    eps_d: float = 1e-3
    x_floor_scale: float = 1e-6
    epsilon_floor: float = 1e-6
    rate_encoding: str = "exp"
    pwl_segments: int = 40
    threshold_fraction: float = 0.1
    steady_n_max: int = 50


@dataclass(frozen=True)
class SweepSettings:
    omega: tuple | None = None        # list of (w1, w2) pairs
    lambda_: tuple | None = None      # list of (l1, l2, l3) triples


@dataclass(frozen=True)
class DropsSettings:
    count: int = 1
    base_seed: int = 1


_PRESETS = ("full", "opa_no_an", "epa_an")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    pilots: PilotSettings = field(default_factory=PilotSettings)
    targets: TargetSettings = field(default_factory=TargetSettings)
    resilience: ResilienceSettings = field(default_factory=ResilienceSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    drops: DropsSettings = field(default_factory=DropsSettings)
    preset: str = "full"
    p_max_mw: float = 200.0
    epa_an_fraction: float | None = None   # defaults to 1 / (K + 1)

    # ---- derived runtime objects -------------------------------------
    def tau_p(self) -> int:
        return self.scenario.K if self.pilots.tau_p is None else self.pilots.tau_p

    def attacked_index(self) -> int:
        return self.pilots.attacked_user - 1

    def pilot_configs(self):
        K = self.scenario.K
        p = np.full(K, self.pilots.p_user_mw)
        pre = PilotConfig(tau_p=self.tau_p(), p_users=p, p_eve=0.0,
                          attacked_user=self.attacked_index())
        attack = PilotConfig(tau_p=self.tau_p(), p_users=p, p_eve=self.pilots.p_eve_mw,
                             attacked_user=self.attacked_index())
        return pre, attack

    def service_targets(self, omega=None) -> ServiceTargets:
        K = self.scenario.K
        om = self.targets.omega if omega is None else omega
        return ServiceTargets(
            sse_des=self.targets.sse_des,
            se_des=np.broadcast_to(np.asarray(self.targets.se_des, dtype=float), (K,)).copy(),
            se_min=np.broadcast_to(np.asarray(self.targets.se_min, dtype=float), (K,)).copy(),
            omega1=float(om[0]), omega2=float(om[1]),
        )

    def solver_options(self) -> SolverOptions:
        s = self.solver
        return SolverOptions(solver=s.solver, fallback_solver=s.fallback_solver,
                             inner_tol=s.inner_tol, sca_tol=s.sca_tol, eps_d=s.eps_d,
                             x_floor_scale=s.x_floor_scale, epsilon_floor=s.epsilon_floor,
                             rate_encoding=s.rate_encoding, pwl_segments=s.pwl_segments,
                             an_enabled=self.preset != "opa_no_an")

    def grid_points(self):
        omegas = self.sweep.omega if self.sweep.omega else [tuple(self.targets.omega)]
        lambdas = self.sweep.lambda_ if self.sweep.lambda_ else [tuple(self.resilience.lambda_)]
        return list(itertools.product(omegas, lambdas))

    def make_clock(self):
        if self.resilience.clock == "fixed":
            return FixedClock(origin_ms=self.resilience.t0_ms,
                              step_ms=self.resilience.clock_step_ms)
        return WallClock(origin_ms=self.resilience.t0_ms)

    def an_fraction(self) -> float:
        if self.epa_an_fraction is not None:
            return self.epa_an_fraction
        return 1.0 / (self.scenario.K + 1)


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------

_YAML_NAME = {"lambda_": "lambda"}


def _build_section(cls, tree, path):
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError(f"{path or 'top level'}: expected a mapping, got {type(tree).__name__}")
    known = {f.name: f for f in fields(cls)}
    yaml_to_field = {_YAML_NAME.get(name, name): name for name in known}
    kwargs = {}
    for key, value in tree.items():
        if key not in yaml_to_field:
            raise ConfigError(f"unknown key: {path}{key}")
        name = yaml_to_field[key]
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path.rstrip('.') or 'config'}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse and fully validate a config file; an empty file gives the defaults."""
    text = Path(path).read_text()
    tree = yaml.safe_load(text)
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a mapping")

    sections = {
        "scenario": ScenarioConfig,
        "pilots": PilotSettings,
        "targets": TargetSettings,
        "resilience": ResilienceSettings,
        "solver": SolverSettings,
        "sweep": SweepSettings,
        "drops": DropsSettings,
    }
    scalars = {"preset", "p_max_mw", "epa_an_fraction"}
    kwargs = {}
    for key, value in tree.items():
        if key in sections:
            kwargs[key] = _build_section(sections[key], value, f"{key}.")
        elif key in scalars:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown key: {key}")
    config = ExperimentConfig(**{k: v for k, v in kwargs.items()})
    _validate_config(config)
    return config


def _validate_config(config: ExperimentConfig) -> None:
    c = config
    if c.preset not in _PRESETS:
        raise ConfigError(f"preset: must be one of {_PRESETS}, got {c.preset!r}")
    if c.p_max_mw <= 0:
        raise ConfigError(f"p_max_mw: must be positive, got {c.p_max_mw}")
    if c.drops.count < 1:
        raise ConfigError(f"drops.count: must be >= 1, got {c.drops.count}")
    if c.tau_p() < c.scenario.K:
        raise ConfigError(f"pilots.tau_p: {c.tau_p()} < K={c.scenario.K}")
    if not (1 <= c.pilots.attacked_user <= c.scenario.K):
        raise ConfigError(f"pilots.attacked_user: must be in 1..{c.scenario.K} (1-based), "
                          f"got {c.pilots.attacked_user}")
    if c.pilots.p_user_mw < 0 or c.pilots.p_eve_mw < 0:
        raise ConfigError("pilots: pilot powers must be non-negative")
    if c.resilience.clock not in ("fixed", "wall"):
        raise ConfigError(f"resilience.clock: must be 'fixed' or 'wall', got {c.resilience.clock!r}")
    if c.resilience.t_d_ms <= 0:
        raise ConfigError(f"resilience.t_d_ms: must be positive, got {c.resilience.t_d_ms}")
    if c.resilience.n_max < 1:
        raise ConfigError(f"resilience.n_max: must be >= 1, got {c.resilience.n_max}")
    try:
        ResilienceWeights(*c.resilience.lambda_)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"resilience.lambda: {exc}") from exc
    try:
        c.service_targets()
    except ValueError as exc:
        raise ConfigError(f"targets: {exc}") from exc
    if not (0 < c.solver.threshold_fraction <= 1):
        raise ConfigError(f"solver.threshold_fraction: must be in (0, 1], "
                          f"got {c.solver.threshold_fraction}")
    if c.sweep.omega is not None:
        if len(c.sweep.omega) == 0:
            raise ConfigError("sweep.omega: grid must be nonempty when present")
        for i, om in enumerate(c.sweep.omega):
            try:
                c.service_targets(om)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"sweep.omega[{i}]: {exc}") from exc
    if c.sweep.lambda_ is not None:
        if len(c.sweep.lambda_) == 0:
            raise ConfigError("sweep.lambda: grid must be nonempty when present")
        for i, lam in enumerate(c.sweep.lambda_):
            try:
                ResilienceWeights(*lam)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"sweep.lambda[{i}]: {exc}") from exc
    if c.epa_an_fraction is not None and not (0 <= c.epa_an_fraction < 1):
        raise ConfigError(f"epa_an_fraction: must be in [0, 1), got {c.epa_an_fraction}")


# ---------------------------------------------------------------------------
# presets and the run loop
# ---------------------------------------------------------------------------

def _epa_allocation(config: ExperimentConfig, with_an: bool) -> PowerAllocation:
    L, K = config.scenario.L, config.scenario.K
    f = config.an_fraction() if with_an else 0.0
    rho_user = config.p_max_mw * (1.0 - f) / K
    return PowerAllocation(u_users=np.full((L, K), np.sqrt(rho_user)),
                           u_an=np.full(L, np.sqrt(f * config.p_max_mw)))


def _epa_timeline(config, drop, pilots_pre, pilots_att, targets, w, clock) -> TimelineResult:
    """Benchmark: fixed equal-power split with AN, no optimization.

    The same allocation is evaluated at every iteration so benchmark curves
    share the time axis of the optimized runs (psi is flat, the recovery
    score still decays).
    """
    part = partition_users(estimation_quality(drop, pilots_pre),
                           config.scenario.M, config.solver.threshold_fraction)
    attacked = config.attacked_index()
    stats_att = estimation_quality(drop, pilots_att)

    steady_alloc = _epa_allocation(config, with_an=False)
    report_steady = evaluate(steady_alloc, estimation_quality(drop, pilots_pre), part, attacked)
    qos = ServiceTargets(sse_des=targets.sse_des, se_des=targets.se_des,
                         se_min=targets.se_min, omega1=0.0, omega2=1.0)
    psi_steady = targets.omega2 * psi_omega(report_steady, qos)

    psi_at_t0 = psi_omega(evaluate(steady_alloc, stats_att, part, attacked), targets)

    an_alloc = _epa_allocation(config, with_an=True)
    psi_an = psi_omega(evaluate(an_alloc, stats_att, part, attacked), targets)
    times = [clock.tick() for _ in range(config.resilience.n_max)]
    records, best_idx = score_records([psi_an] * len(times), times, 1.0 - psi_at_t0,
                                      w, clock.origin_ms, config.resilience.t_d_ms)
    trace = ResilienceTrace(t0_ms=clock.origin_ms, t_d_ms=config.resilience.t_d_ms,
                            alpha_abs=1.0 - psi_at_t0, records=tuple(records),
                            best_index=best_idx)
    allocations = {r.iteration: an_alloc for r in records}
    return TimelineResult(trace=trace, steady_alloc=steady_alloc, psi_steady=psi_steady,
                          psi_at_t0=psi_at_t0, best_alloc=an_alloc, allocations=allocations)


def _clamp_trace(trace: ResilienceTrace) -> ResilienceTrace:
    def cl(x):
        return min(1.0, max(0.0, x))
    records = tuple(replace(r, alpha_ada=cl(r.alpha_ada), alpha_overall=cl(r.alpha_overall))
                    for r in trace.records)
    return replace(trace, alpha_abs=cl(trace.alpha_abs), records=records)


def run(config: ExperimentConfig, out_dir) -> int:
    """Execute every (drop, grid point), write traces/allocations/manifest.

    Returns a process exit status: 0 if at least one work item succeeded.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pilots_pre, pilots_att = config.pilot_configs()
    grid = config.grid_points()
    entries = []
    any_ok = False

    for d in range(config.drops.count):
        seed = config.drops.base_seed + d
        drop = generate_drop(config.scenario, seed)
        for g, (om, lam) in enumerate(grid):
            targets = config.service_targets(om)
            w = ResilienceWeights(*lam)
            clock = config.make_clock()
            entry = {
                "drop": d, "seed": seed, "grid_index": g,
                "omega": list(om), "lambda": list(lam), "preset": config.preset,
                "trace": f"trace_d{d:03d}_g{g:03d}.csv",
                "allocation": f"alloc_d{d:03d}_g{g:03d}.txt",
            }
            try:
                if config.preset == "epa_an":
                    result = _epa_timeline(config, drop, pilots_pre, pilots_att,
                                           targets, w, clock)
                else:
                    result = run_outage_timeline(
                        drop, pilots_pre, pilots_att, config.scenario.M, targets,
                        config.p_max_mw, w, config.resilience.n_max,
                        config.resilience.t_d_ms, clock,
                        threshold_fraction=config.solver.threshold_fraction,
                        options=config.solver_options(),
                        steady_n_max=config.solver.steady_n_max)
            except Exception as exc:
                entry.update(status="failed", error=str(exc), trace=None, allocation=None)
                entries.append(entry)
                continue
            trace = result.trace
            if config.resilience.clamp_alpha:
                trace = _clamp_trace(trace)
            tr.write_trace(out / entry["trace"], trace)
            tr.write_allocation(out / entry["allocation"], result.best_alloc)
            entry.update(status="ok", psi_steady=result.psi_steady,
                         psi_at_t0=result.psi_at_t0,
                         best_index=trace.best_index)
            entries.append(entry)
            any_ok = True

    manifest = {
        "config_hash": tr.config_hash(config),
        "preset": config.preset,
        "drops": config.drops.count,
        "base_seed": config.drops.base_seed,
        "clock": config.resilience.clock,
        "entries": entries,
    }
    tr.write_manifest(out / "manifest.json", manifest)
    return 0 if any_ok else 1


# ---------------------------------------------------------------------------
# validation oracles
# ---------------------------------------------------------------------------

def grid_search_single_link(stats, part, p_max: float, targets: ServiceTargets,
                            resolution: float = 1e-3):
    """Exhaustive (rho_user, rho_an) search for the single-AP single-user case.

    Recomputes the closed forms directly from their scalar definitions, so it
    is an independent check on both the evaluator and the optimizer. Returns
    (best_psi, best_rho_user, best_rho_an).
    """
    if stats.beta_users.shape != (1, 1):
        raise ValueError("grid oracle is defined for L = 1, K = 1 instances only")
    m = float(part.coherent_dims[0])
    beta = float(stats.beta_users[0, 0])
    gamma = float(stats.gamma_users[0, 0])
    beta_e = float(stats.beta_eve[0])
    gamma_e = float(stats.gamma_eve[0])

    step = resolution * p_max
    vals = np.arange(0.0, p_max + step / 2, step)
    rho1, rho_an = np.meshgrid(vals, vals, indexing="ij")
    feasible = rho1 + rho_an <= p_max + 1e-12

    sinr1 = m * gamma * rho1 / ((beta - gamma) * (rho1 + rho_an) + 1.0)
    se1 = np.log2(1.0 + sinr1)
    sinr_e = (m * gamma_e * rho1 + (beta_e - gamma_e) * rho1) / ((beta_e - gamma_e) * rho_an + 1.0)
    sse = np.maximum(0.0, se1 - np.log2(1.0 + sinr_e))
    psi = targets.omega1 * (sse / targets.sse_des - 1.0) ** 2
    feasible &= se1 >= float(targets.se_min[0])

    psi = np.where(feasible, psi, np.inf)
    idx = np.unravel_index(np.argmin(psi), psi.shape)
    return float(psi[idx]), float(rho1[idx]), float(rho_an[idx])


def validate(config: ExperimentConfig, n_samples: int = 100_000, seed: int = 7,
             stream=None) -> bool:
    """Closed-form vs Monte Carlo term table plus the tiny-instance grid check."""
    stream = stream if stream is not None else sys.stdout
    if config.scenario.L > 4 or config.scenario.K > 4:
        raise ConfigError("validate: small-instance limits are L <= 4 and K <= 4")
    scen = config.scenario
    drop = generate_drop(scen, config.drops.base_seed)
    _, pilots = config.pilot_configs()
    stats = estimation_quality(drop, pilots)
    part = partition_users(stats, scen.M, config.solver.threshold_fraction)

    rng = np.random.default_rng(seed)
    rho = rng.uniform(0, config.p_max_mw / (scen.K + 1), size=(scen.L, scen.K))
    rho_an = rng.uniform(0, config.p_max_mw / (scen.K + 1), size=scen.L)
    alloc = PowerAllocation(u_users=np.sqrt(rho), u_an=np.sqrt(rho_an))

    report = oracle_expectations(stats, part, alloc, pilots, n_samples, seed)
    n_fail = 0
    print(f"{'term':28s} {'index':12s} {'monte_carlo':>14s} {'closed_form':>14s} "
          f"{'sigmas':>8s}  result", file=stream)
    for t in report.terms:
        sig = abs(t.estimate - t.closed_form) / t.std_error if t.std_error > 0 else 0.0
        ok = t.passes
        n_fail += 0 if ok else 1
        print(f"{t.name:28s} {str(t.index):12s} {t.estimate:14.6g} {t.closed_form:14.6g} "
              f"{sig:8.2f}  {'pass' if ok else 'FAIL'}", file=stream)

    # zero-power allocation: interference terms vanish identically
    zero = PowerAllocation(u_users=np.zeros((scen.L, scen.K)), u_an=np.zeros(scen.L))
    z_report = evaluate(zero, stats, part, config.attacked_index())
    zeros_ok = np.all(z_report.sinr_users == 0.0) and z_report.sinr_eve == 0.0
    n_fail += 0 if zeros_ok else 1
    print(f"{'zero_power_sinr':28s} {'()':12s} {'exact':>14s} {'0':>14s} {0.0:8.2f}  "
          f"{'pass' if zeros_ok else 'FAIL'}", file=stream)

    # tiny-instance grid comparison; scan for a drop where positive secrecy is
    # achievable (otherwise the reformulated problem is legitimately infeasible)
    tiny = replace(scen, L=1, K=1)
    tiny_pil = PilotConfig(tau_p=max(1, config.pilots.tau_p or 1),
                           p_users=np.array([config.pilots.p_user_mw]),
                           p_eve=config.pilots.p_eve_mw, attacked_user=0)
    tiny_targets = ServiceTargets(sse_des=config.targets.sse_des,
                                  se_des=np.array([5.0]), se_min=np.array([0.1]),
                                  omega1=1.0, omega2=0.0)
    psi_grid = psi_sca = None
    for offset in range(20):
        tiny_drop = generate_drop(tiny, config.drops.base_seed + offset)
        tiny_stats = estimation_quality(tiny_drop, tiny_pil)
        tiny_part = partition_users(tiny_stats, tiny.M, config.solver.threshold_fraction)
        candidate, _, _ = grid_search_single_link(tiny_stats, tiny_part, config.p_max_mw,
                                                  tiny_targets)
        if not np.isfinite(candidate) or candidate >= 0.999:
            continue
        try:
            sca_res = run_sca(tiny_stats, tiny_part, tiny_targets, config.p_max_mw,
                              config.solver_options(), attacked_user=0, n_max=60)
        except SubproblemInfeasibleError:
            continue
        psi_grid, psi_sca = candidate, sca_res.psi_history[-1]
        break
    if psi_grid is None:
        n_fail += 1
        print(f"{'grid_vs_sca_psi':28s} {'()':12s} {'-':>14s} {'-':>14s} {'-':>8s}  FAIL "
              "(no feasible single-link drop found)", file=stream)
    else:
        gap = abs(psi_sca - psi_grid) / max(psi_grid, 1e-12)
        grid_ok = psi_sca <= psi_grid * 1.01 + 1e-9
        n_fail += 0 if grid_ok else 1
        print(f"{'grid_vs_sca_psi':28s} {'()':12s} {psi_sca:14.6g} {psi_grid:14.6g} "
              f"{gap:8.4f}  {'pass' if grid_ok else 'FAIL'}", file=stream)

    print(f"{len(report.terms) + 2} checks, {n_fail} failures", file=stream)
    return n_fail == 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _drop_summary(config: ExperimentConfig, stream=None):
    stream = stream if stream is not None else sys.stdout
    drop = generate_drop(config.scenario, config.drops.base_seed)
    beta = drop.beta_users
    print(f"APs: {config.scenario.L}  users: {config.scenario.K}  "
          f"area: {config.scenario.area_side_m:.0f} m", file=stream)
    print(f"eve at {drop.eve_position.round(1).tolist()} "
          f"(user 1 at {drop.user_positions[0].round(1).tolist()})", file=stream)
    print(f"beta_users: min {beta.min():.3e}  median {np.median(beta):.3e}  "
          f"max {beta.max():.3e}", file=stream)
    print(f"beta_eve:   min {drop.beta_eve.min():.3e}  max {drop.beta_eve.max():.3e}",
          file=stream)


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        config = replace(config, drops=replace(config.drops, base_seed=args.seed))
    if args.preset is not None:
        config = replace(config, preset=args.preset)
    if args.clock is not None:
        config = replace(config, resilience=replace(config.resilience, clock=args.clock))
    _validate_config(config)
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cfres",
                                     description="secure cell-free MIMO resilience experiments")
    parser.add_argument("command", choices=["drop", "run", "sweep", "validate"])
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")
    parser.add_argument("--out", type=Path, default=Path("runs/out"), help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the base seed")
    parser.add_argument("--preset", choices=_PRESETS, default=None)
    parser.add_argument("--clock", choices=["wall", "fixed"], default=None)
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = _apply_overrides(config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "drop":
        _drop_summary(config)
        return 0
    if args.command == "validate":
        return 0 if validate(config) else 1
    if args.command == "sweep" and not (config.sweep.omega or config.sweep.lambda_):
        print("config error: sweep requires a sweep.omega or sweep.lambda grid",
              file=sys.stderr)
        return 2
    return run(config, args.out)


if __name__ == "__main__":
    sys.exit(main())
