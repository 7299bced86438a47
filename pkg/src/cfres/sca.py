"""Service-priority-weighted power allocation by successive convex approximation.

Each outer iteration linearizes the two non-convex rate constraints around the
current iterate and solves one convex conic subproblem:

  * the user SINR x^2/phi is replaced by its first-order global lower bound
    (2 x_n / phi_n) x(u) - (x_n / phi_n)^2 phi(u),
  * the eavesdropper SINR upper bound gamma_e enters through a second-order
    cone on ||[b_e^T u_a; B_e u_a]||^2 <= gamma_e * f_D^lb(u) with the convex
    denominator f_D replaced by its tangent at the iterate,
  * the eavesdropper rate log2(1 + gamma_e) is replaced by its tangent, which
    over-estimates it, keeping the approximation on the safe side.

The subproblem is a cone program: second-order cone blocks for the quadratic
pieces, exponential cones for the user rate constraint (with a chord-based
piecewise-linear fallback), and the quadratic objective handled as a cone
epigraph by the modeling layer. All linearization data enters through solver
parameters so the canonicalized problem is built once per instance and only
restuffed at each iteration.
"""

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .channel import ChannelStatistics
from .ppzf import (
    PowerAllocation,
    UserPartition,
    PerformanceReport,
    EveInactiveError,
    evaluate,
    eve_gain_vector,
    eve_leak_vector,
    sinr_eve,
    user_gain_matrix,
    user_leak_matrix,
)

__all__ = [
    "ServiceTargets",
    "SolverOptions",
    "IteratePoint",
    "ConicSubproblem",
    "SubproblemModel",
    "DegenerateLinearizationError",
    "SubproblemInfeasibleError",
    "SolverFailureError",
    "initial_point",
    "build_subproblem",
    "solve_subproblem",
    "psi_omega",
    "sinr_user_lower_bound",
    "f_d_value",
    "f_d_lower_bound",
    "sca_iterations",
    "run_sca",
    "SCAResult",
]

_LN2 = np.log(2.0)


class DegenerateLinearizationError(RuntimeError):
    """Coherent gain at the expansion point too small for a valid linearization."""


class SubproblemInfeasibleError(RuntimeError):
    """The convex subproblem has an empty feasible set (e.g. SE floors too high)."""


class SolverFailureError(RuntimeError):
    """The conic solver stopped without a usable solution."""


@dataclass(frozen=True)
class ServiceTargets:
    """Desired and minimum rates plus the service-priority weights."""

    sse_des: float             # desired secrecy SE for the attacked user, bit/s/Hz
    se_des: np.ndarray         # (K,) desired SE per user
    se_min: np.ndarray         # (K,) hard SE floor per user
    omega1: float              # weight on the secrecy gap
    omega2: float              # weight on the per-user QoS gap

    def __post_init__(self):
        object.__setattr__(self, "se_des", np.asarray(self.se_des, dtype=float))
        object.__setattr__(self, "se_min", np.asarray(self.se_min, dtype=float))
        if not (self.sse_des > 0):
            raise ValueError(f"sse_des must be positive, got {self.sse_des}")
        if np.any(self.se_des <= 0):
            raise ValueError("se_des entries must be positive")
        if np.any(self.se_min < 0):
            raise ValueError("se_min entries must be non-negative")
        if self.omega1 < 0 or self.omega2 < 0 or abs(self.omega1 + self.omega2 - 1.0) > 1e-9:
            raise ValueError(f"omega weights must be non-negative and sum to 1, "
                             f"got ({self.omega1}, {self.omega2})")


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the inner conic solves and the outer SCA loop."""

    solver: str = "CLARABEL"
    fallback_solver: str = "SCS"
    inner_tol: float = 1e-8
    sca_tol: float = 1e-5        # stop when |psi_n - psi_{n-1}| falls below this
    eps_d: float = 1e-3          # positivity safeguard on the linearized denominator
    x_floor_scale: float = 1e-6  # x_floor = scale * sqrt(max P_max * max gamma)
    epsilon_floor: float = 1e-6  # per-user power floor in the initial point
    rate_encoding: str = "exp"   # "exp" (exponential cone) or "pwl" (chord fallback)
    pwl_segments: int = 40
    an_enabled: bool = True


@dataclass(frozen=True)
class IteratePoint:
    """One SCA iterate: allocation, rate surrogates, and cached linearization data."""

    alloc: PowerAllocation
    tau: np.ndarray            # (K,) user-rate surrogates
    eta1: float | None         # eavesdropper-rate surrogate (None when attack off)
    zeta1: float | None        # secrecy surrogate, >= 0
    gamma_e: float | None      # eavesdropper SINR at this allocation
    x: np.ndarray              # (K,) a_k^T u_k at this allocation
    phi: np.ndarray            # (K,) interference-plus-noise quadratic at this allocation
    f_d: float | None          # eavesdropper denominator at this allocation
    f_d_grad_users: np.ndarray | None   # (L, K); zero column for the attacked user
    f_d_grad_an: np.ndarray | None      # (L,)


# ---------------------------------------------------------------------------
# closed-form pieces reused by the model and by the validity tests
# ---------------------------------------------------------------------------

def _x_phi(alloc, stats, part):
    a = user_gain_matrix(stats, part)
    A = user_leak_matrix(stats, part)
    x = np.einsum("lk,lk->k", a, alloc.u_users)
    power_all = alloc.rho_users.sum(axis=1) + alloc.rho_an      # (L,)
    phi = (A ** 2).T @ power_all + 1.0
    return x, phi


def f_d_value(alloc, stats, part, attacked_user=0) -> float:
    """Eavesdropper interference-plus-noise denominator f_D(u)."""
    B2 = eve_leak_vector(stats, part, attacked_user) ** 2
    rho = alloc.rho_users.copy()
    rho[:, attacked_user] = 0.0
    return float(B2 @ rho.sum(axis=1) + B2 @ alloc.rho_an + 1.0)


def _f_d_gradient(alloc, stats, part, attacked_user=0):
    B2 = eve_leak_vector(stats, part, attacked_user) ** 2
    g_users = 2.0 * B2[:, None] * alloc.u_users
    g_users[:, attacked_user] = 0.0
    g_an = 2.0 * B2 * alloc.u_an
    return g_users, g_an


def f_d_lower_bound(alloc, point: IteratePoint, stats, part, attacked_user=0) -> float:
    """Tangent of the convex f_D at the iterate: a global lower bound."""
    du = alloc.u_users - point.alloc.u_users
    dan = alloc.u_an - point.alloc.u_an
    return float(point.f_d + np.sum(point.f_d_grad_users * du) + point.f_d_grad_an @ dan)


def sinr_user_lower_bound(k: int, alloc, point: IteratePoint, stats, part) -> float:
    """First-order global lower bound of x^2/phi around the iterate."""
    a_k = user_gain_matrix(stats, part)[:, k]
    A_k2 = user_leak_matrix(stats, part)[:, k] ** 2
    x = a_k @ alloc.u_users[:, k]
    power_all = alloc.rho_users.sum(axis=1) + alloc.rho_an
    phi = A_k2 @ power_all + 1.0
    r = point.x[k] / point.phi[k]
    return 2.0 * r * x - r ** 2 * phi


def psi_omega(report: PerformanceReport, targets: ServiceTargets) -> float:
    """Weighted squared-gap objective on true closed-form performance."""
    K = report.se_users.size
    a = report.attacked_user
    total = 0.0
    if targets.omega1 > 0:
        if report.sse_target is None:
            raise EveInactiveError("omega1 > 0 requires an active eavesdropper (SSE undefined)")
        total += targets.omega1 * (report.sse_target / targets.sse_des - 1.0) ** 2
    if K >= 2:
        others = np.arange(K) != a
        gaps = report.se_users[others] / targets.se_des[others] - 1.0
        total += targets.omega2 / (K - 1) * float(np.sum(gaps ** 2))
    return float(total)


def initial_point(stats: ChannelStatistics, part: UserPartition, p_max,
                  epsilon_floor: float = 1e-6, attacked_user: int = 0) -> IteratePoint:
    """Even power split over users, no artificial noise, surrogates from the
    closed-form evaluation at that allocation."""
    L, K = stats.beta_users.shape
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (L,))
    if np.any(p_max <= 0):
        raise ValueError("per-AP power budgets must be positive")
    rho = np.maximum(p_max[:, None] / K, epsilon_floor) * np.ones((L, K))
    alloc = PowerAllocation(u_users=np.sqrt(rho), u_an=np.zeros(L))
    return _make_point(alloc, stats, part, attacked_user)


def _make_point(alloc, stats, part, attacked_user, tau=None, eta1=None, zeta1=None):
    """Assemble an IteratePoint, recomputing every cached quantity from u."""
    report = evaluate(alloc, stats, part, attacked_user)
    x, phi = _x_phi(alloc, stats, part)
    if tau is None:
        tau = report.se_users.copy()
    if stats.eve_active:
        gamma_e = sinr_eve(alloc, stats, part, attacked_user)
        if eta1 is None:
            eta1 = float(np.log2(1.0 + gamma_e))
        if zeta1 is None:
            zeta1 = max(0.0, float(tau[attacked_user]) - eta1)
        f_d = f_d_value(alloc, stats, part, attacked_user)
        g_users, g_an = _f_d_gradient(alloc, stats, part, attacked_user)
    else:
        gamma_e = eta1 = zeta1 = f_d = g_users = g_an = None
    return IteratePoint(alloc=alloc, tau=np.asarray(tau, dtype=float), eta1=eta1,
                        zeta1=zeta1, gamma_e=gamma_e, x=x, phi=phi, f_d=f_d,
                        f_d_grad_users=g_users, f_d_grad_an=g_an)


# ---------------------------------------------------------------------------
# the parametrized conic subproblem
# ---------------------------------------------------------------------------

class SubproblemModel:
    """Reusable convexified subproblem for one (stats, partition, targets) instance.

    The problem is canonicalized once; bind() writes a fresh linearization
    point into the parameters. The interference quadratic phi_k depends on u
    only through the per-AP total powers, so a shared epigraph variable
    q_l >= sum_k u_{l,k}^2 + u_{AN,l}^2 carries all of them: one small SOC per
    AP (doubling as the power ball via q_l <= P_max,l), one exponential cone
    per user rate (in "exp" mode), one SOC for the eavesdropper quadratic, and
    the quadratic objective as a cone epigraph via the modeling layer.
    """

    def __init__(self, stats, part, targets, p_max, options=None, attacked_user=0):
        self.stats = stats
        self.part = part
        self.targets = targets
        self.options = options or SolverOptions()
        self.attacked = attacked_user
        L, K = stats.beta_users.shape
        self.L, self.K = L, K
        self.p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (L,)).copy()
        self.eve_active = stats.eve_active
        an = self.options.an_enabled

        a_mat = user_gain_matrix(stats, part)
        A2_mat = user_leak_matrix(stats, part) ** 2

        U = cp.Variable((L, K), name="u_users", nonneg=True)
        uan = cp.Variable(L, name="u_an", nonneg=True) if an else None
        q = cp.Variable(L, name="q_power", nonneg=True)
        tau = cp.Variable(K, name="tau")
        g = cp.Variable(K, name="g", nonneg=True)
        self.vars = {"U": U, "uan": uan, "tau": tau, "g": g, "q": q}

        self.c1 = cp.Parameter(K, name="c1", nonneg=True)    # (x_n/phi_n)^2
        self.c2 = cp.Parameter(K, name="c2", nonneg=True)    # 2 x_n/phi_n

        cons = []
        n_soc = 0
        for l in range(L):
            ball = cp.sum_squares(U[l, :])
            if an:
                ball = ball + cp.square(uan[l])
            cons.append(ball <= q[l])                       # per-AP power epigraph
            n_soc += 1
        cons.append(q <= self.p_max)                        # power budget (Eq. 8f)

        for k in range(K):
            phi_ub = A2_mat[:, k] @ q + 1.0                 # phi_k through the epigraph
            cons.append(g[k] + self.c1[k] * phi_ub <= self.c2[k] * (a_mat[:, k] @ U[:, k]))
            cons.append(tau[k] >= float(targets.se_min[k]))

        n_exp = 0
        if self.options.rate_encoding == "exp":
            for k in range(K):
                cons.append(tau[k] <= cp.log1p(g[k]) / _LN2)
                n_exp += 1
        elif self.options.rate_encoding == "pwl":
            g_max = (a_mat * np.sqrt(self.p_max)[:, None]).sum(axis=0) ** 2
            for k in range(K):
                knots = np.concatenate([[0.0], g_max[k] * np.geomspace(1e-6, 1.0, self.options.pwl_segments)])
                fvals = np.log2(1.0 + knots)
                slopes = np.diff(fvals) / np.diff(knots)
                intercepts = fvals[:-1] - slopes * knots[:-1]
                cons.append(g[k] <= g_max[k])        # chords certified only on [0, g_max]
                for sl, ic in zip(slopes, intercepts):
                    cons.append(tau[k] <= sl * g[k] + ic)
        else:
            raise ValueError(f"unknown rate_encoding {self.options.rate_encoding!r}")

        if self.eve_active:
            b_e = eve_gain_vector(stats, part)
            B_e = eve_leak_vector(stats, part, attacked_user)
            eta1 = cp.Variable(name="eta1")
            zeta1 = cp.Variable(name="zeta1", nonneg=True)
            gamma_e = cp.Variable(name="gamma_e", nonneg=True)
            self.vars.update({"eta1": eta1, "zeta1": zeta1, "gamma_e": gamma_e})

            self.fd_const = cp.Parameter(name="fd_const")
            self.fd_g_users = cp.Parameter((L, K), name="fd_g_users")
            self.fd_g_an = cp.Parameter(L, name="fd_g_an") if an else None
            fd_lb = self.fd_const + cp.sum(cp.multiply(self.fd_g_users, U))
            if an:
                fd_lb = fd_lb + self.fd_g_an @ uan
            x_e = cp.hstack([b_e @ U[:, attacked_user], cp.multiply(B_e, U[:, attacked_user])])
            cons.append(cp.norm(cp.hstack([2.0 * x_e, gamma_e - fd_lb])) <= gamma_e + fd_lb)
            n_soc += 1
            cons.append(fd_lb >= self.options.eps_d)

            self.tan_const = cp.Parameter(name="tan_const")
            self.tan_slope = cp.Parameter(name="tan_slope", nonneg=True)
            cons.append(eta1 >= self.tan_const + self.tan_slope * gamma_e)
            cons.append(tau[attacked_user] - eta1 >= zeta1)
        elif targets.omega1 > 0:
            raise EveInactiveError("omega1 > 0 requires an active eavesdropper in the statistics")

        obj = 0
        if self.eve_active and targets.omega1 > 0:
            obj = obj + targets.omega1 * cp.square(zeta1 / targets.sse_des - 1.0)
        if K >= 2 and targets.omega2 > 0:
            others = [k for k in range(K) if k != attacked_user]
            gaps = cp.hstack([tau[k] / float(targets.se_des[k]) - 1.0 for k in others])
            obj = obj + targets.omega2 / (K - 1) * cp.sum_squares(gaps)

        self.problem = cp.Problem(cp.Minimize(obj), cons)
        self.structure = {
            "n_power_vars": L * K + (L if an else 0) + L,
            "n_rate_vars": 2 * K + (3 if self.eve_active else 0),
            "soc_blocks": n_soc,
            "exp_cones": n_exp,
            "objective": "quadratic, canonicalized to a cone epigraph",
        }
        self._ladder_level = 0    # last tolerance level that solved cleanly

    def x_floor(self) -> float:
        return self.options.x_floor_scale * np.sqrt(self.p_max.max() * self.stats.gamma_users.max())

    def bind(self, point: IteratePoint) -> "ConicSubproblem":
        """Write the linearization point into the model parameters."""
        floor = self.x_floor()
        if np.any(point.x < floor):
            bad = int(np.argmin(point.x))
            raise DegenerateLinearizationError(
                f"x_{bad} = {point.x[bad]:.3e} below floor {floor:.3e}: "
                "expansion point has (near-)zero coherent gain")
        ratio = point.x / point.phi
        self.c1.value = ratio ** 2
        self.c2.value = 2.0 * ratio
        if self.eve_active:
            lin = float(np.sum(point.f_d_grad_users * point.alloc.u_users))
            if self.options.an_enabled:
                lin += float(point.f_d_grad_an @ point.alloc.u_an)
                self.fd_g_an.value = point.f_d_grad_an
            self.fd_const.value = point.f_d - lin
            self.fd_g_users.value = point.f_d_grad_users
            ge = point.gamma_e
            self.tan_const.value = float(np.log2(1.0 + ge) - ge / ((1.0 + ge) * _LN2))
            self.tan_slope.value = 1.0 / ((1.0 + ge) * _LN2)
        return ConicSubproblem(model=self, point=point)


@dataclass(frozen=True)
class ConicSubproblem:
    """A SubproblemModel bound at a specific linearization point."""

    model: SubproblemModel
    point: IteratePoint

    @property
    def structure(self):
        return self.model.structure


def build_subproblem(point: IteratePoint, stats, part, targets, p_max,
                     options=None, attacked_user=0, model=None) -> ConicSubproblem:
    """Convexified subproblem at the given iterate (builds a model if needed)."""
    if model is None:
        model = SubproblemModel(stats, part, targets, p_max, options, attacked_user)
    return model.bind(point)


_OK = {"optimal", "optimal_inaccurate"}
_INFEASIBLE = {"infeasible", "infeasible_inaccurate"}


def solve_subproblem(sub: ConicSubproblem, tolerance=None) -> IteratePoint:
    """Solve the bound subproblem and return the next iterate.

    The cached linearization data of the returned point is recomputed from the
    solved allocation, and gamma_e is reset to the true eavesdropper SINR at
    the new allocation (the next tangent expands there).
    """
    model = sub.model
    tol = model.options.inner_tol if tolerance is None else tolerance
    loose = max(tol, 1e-6)

    # near a converged iterate the strict solve can stall with insufficient
    # progress; retry with relaxed tolerances before switching solvers, and
    # remember the level that worked so plateau iterations skip dead attempts
    attempts = [(model.options.solver, tol)]
    if loose > tol:
        attempts.append((model.options.solver, loose))
    attempts.append((model.options.fallback_solver, max(tol, 1e-7)))

    def attempt(solver, t):
        if solver == "CLARABEL":
            return model.problem.solve(solver=cp.CLARABEL, tol_gap_abs=t,
                                       tol_gap_rel=t, tol_feas=t)
        if solver == "SCS":
            return model.problem.solve(solver=cp.SCS, eps=t, max_iters=50_000)
        return model.problem.solve(solver=solver)

    status = None
    start = 0
    if tolerance is None:
        # resume one level stricter than the last success so accuracy recovers
        start = min(max(model._ladder_level - 1, 0), len(attempts) - 1)
    for level in range(start, len(attempts)):
        solver, t = attempts[level]
        try:
            attempt(solver, t)
        except cp.SolverError:
            continue
        status = model.problem.status
        if status in _OK or status in _INFEASIBLE:
            if tolerance is None:
                model._ladder_level = level
            break
    if status in _INFEASIBLE:
        raise SubproblemInfeasibleError(
            f"subproblem infeasible (status {status}): SE floors inconsistent with the "
            "power budget at this linearization")
    if status not in _OK:
        raise SolverFailureError(f"conic solve failed (status {status})")

    U = np.maximum(model.vars["U"].value, 0.0)
    uan = np.maximum(model.vars["uan"].value, 0.0) if model.options.an_enabled else np.zeros(model.L)
    alloc = PowerAllocation(u_users=U, u_an=uan)
    tau = np.asarray(model.vars["tau"].value, dtype=float)
    if model.eve_active:
        eta1 = float(model.vars["eta1"].value)
        zeta1 = max(0.0, float(model.vars["zeta1"].value))
    else:
        eta1 = zeta1 = None
    return _make_point(alloc, model.stats, model.part, model.attacked,
                       tau=tau, eta1=eta1, zeta1=zeta1)


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------

@dataclass
class SCAResult:
    point: IteratePoint
    psi_history: list           # psi at the initial point, then one entry per iteration
    reports: list               # PerformanceReport per psi_history entry
    n_iterations: int
    converged: bool


def sca_iterations(stats, part, targets, p_max, options=None, attacked_user=0,
                   initial=None):
    """Generator yielding (n, point, report, psi) after each solved iteration.

    Inexact inner solves can return a marginally worse candidate near the
    plateau; a monotone safeguard keeps the previous iterate in that case, so
    the yielded true-objective sequence is non-increasing from iteration 1 on
    (the previous iterate is always feasible for the next subproblem).
    """
    options = options or SolverOptions()
    point = initial if initial is not None else initial_point(
        stats, part, p_max, options.epsilon_floor, attacked_user)
    model = SubproblemModel(stats, part, targets, p_max, options, attacked_user)
    n = 0
    best = None               # (point, report, psi) of the incumbent iterate
    stalled = False
    while True:
        n += 1
        if not stalled:
            candidate = solve_subproblem(model.bind(point if best is None else best[0]))
            report = evaluate(candidate.alloc, stats, part, attacked_user)
            psi = psi_omega(report, targets)
            if best is None or psi <= best[2]:
                best = (candidate, report, psi)
            else:
                # rejected candidate with an unchanged expansion point: the
                # loop is at a deterministic fixed point, later solves repeat
                stalled = True
        yield n, best[0], best[1], best[2]


def run_sca(stats, part, targets, p_max, options=None, attacked_user=0,
            n_max=100, initial=None) -> SCAResult:
    """Run SCA until the true objective stalls or n_max iterations."""
    options = options or SolverOptions()
    point = initial if initial is not None else initial_point(
        stats, part, p_max, options.epsilon_floor, attacked_user)
    report0 = evaluate(point.alloc, stats, part, attacked_user)
    psi_prev = psi_omega(report0, targets)
    history, reports = [psi_prev], [report0]
    converged = False
    it = sca_iterations(stats, part, targets, p_max, options, attacked_user, initial=point)
    best_point = point
    for n, point, report, psi in it:
        history.append(psi)
        reports.append(report)
        best_point = point
        if abs(psi - psi_prev) < options.sca_tol:
            converged = True
            break
        psi_prev = psi
        if n >= n_max:
            break
    return SCAResult(point=best_point, psi_history=history, reports=reports,
                     n_iterations=len(history) - 1, converged=converged)
