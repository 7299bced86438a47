"""Protective partial zero-forcing: user partition, closed-form SINR/SE/SSE,
precoder construction, and the Monte Carlo oracle for every expectation term.

Per AP, strong users get zero-forcing service while weak users and the
artificial-noise signal are beamformed in the null space of the strong users'
estimated channels. The closed-form SINRs are hardening bounds assembled from
per-link expectation terms; oracle_expectations validates each term against
sample averages over the actual precoders.
"""

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, ChannelStatistics, PilotConfig, sample_realization_batch

__all__ = [
    "UserPartition",
    "PowerAllocation",
    "PerformanceReport",
    "Precoders",
    "PrecoderRankError",
    "EveInactiveError",
    "partition_users",
    "user_gain_matrix",
    "user_leak_matrix",
    "eve_gain_vector",
    "eve_leak_vector",
    "sinr_user",
    "sinr_user_quad",
    "sinr_eve",
    "sinr_eve_quad",
    "evaluate",
    "build_precoders",
    "oracle_expectations",
    "OracleTerm",
    "OracleReport",
]


class PrecoderRankError(RuntimeError):
    """Estimated strong-user matrix lost full column rank at some AP."""


class EveInactiveError(RuntimeError):
    """Eavesdropper-side quantity requested while the attack is switched off."""


@dataclass(frozen=True)
class UserPartition:
    """Per-AP strong/weak split and the derived per-user AP sets.

    delta[l, k] is True iff user k is in the strong set of AP l. The strong
    set is capped at M - 1 users so the null space used for weak users and
    artificial noise is never empty.
    """

    strong_sets: list           # per AP: sorted int array of strong users
    weak_sets: list             # per AP: sorted int array of weak users
    zf_aps: list                # per user: sorted int array of APs where the user is strong
    mrt_aps: list               # per user: APs where the user is weak
    delta: np.ndarray           # (L, K) bool
    m_antennas: int

    @property
    def strong_counts(self) -> np.ndarray:
        """|S_l| for every AP."""
        return self.delta.sum(axis=1)

    @property
    def coherent_dims(self) -> np.ndarray:
        """M - |S_l| for every AP (dimension left for PMRT/AN)."""
        return self.m_antennas - self.strong_counts


@dataclass(frozen=True)
class PowerAllocation:
    """Amplitude (square-root power) coefficients, linear power units."""

    u_users: np.ndarray        # (L, K)
    u_an: np.ndarray           # (L,)

    def __post_init__(self):
        if np.any(self.u_users < 0) or np.any(self.u_an < 0):
            raise ValueError("amplitude coefficients must be non-negative")

    @property
    def rho_users(self) -> np.ndarray:
        return self.u_users ** 2

    @property
    def rho_an(self) -> np.ndarray:
        return self.u_an ** 2

    def per_ap_power(self) -> np.ndarray:
        return self.rho_users.sum(axis=1) + self.rho_an


@dataclass(frozen=True)
class PerformanceReport:
    """Closed-form downlink performance at one allocation."""

    sinr_users: np.ndarray     # (K,)
    se_users: np.ndarray       # (K,) bit/s/Hz
    sinr_eve: float | None     # None when the attack is off
    se_eve: float | None
    sse_target: float | None   # [SE_target - SE_eve]^+, None when the attack is off
    attacked_user: int


def partition_users(stats: ChannelStatistics, M: int, threshold_fraction: float) -> UserPartition:
    """Split users into per-AP strong/weak sets from the large-scale gains.

    A user is a strong candidate at AP l if beta_{l,k} is at least
    threshold_fraction of the AP's best gain; candidates are kept in
    decreasing beta order (ties broken by ascending user index) and truncated
    to at most min(M - 1, K) users.
    """
    if not (0 < threshold_fraction <= 1):
        raise ValueError(f"threshold_fraction must be in (0, 1], got {threshold_fraction}")
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")

    beta = stats.beta_users
    L, K = beta.shape
    cap = min(M - 1, K)

    strong_sets, weak_sets = [], []
    delta = np.zeros((L, K), dtype=bool)
    for l in range(L):
        row = beta[l]
        candidates = np.flatnonzero(row >= threshold_fraction * row.max())
        # decreasing beta, ascending index on ties
        order = candidates[np.lexsort((candidates, -row[candidates]))]
        strong = np.sort(order[:cap])
        strong_sets.append(strong)
        weak_sets.append(np.setdiff1d(np.arange(K), strong))
        delta[l, strong] = True

    zf_aps = [np.flatnonzero(delta[:, k]) for k in range(K)]
    mrt_aps = [np.flatnonzero(~delta[:, k]) for k in range(K)]
    return UserPartition(strong_sets=strong_sets, weak_sets=weak_sets,
                         zf_aps=zf_aps, mrt_aps=mrt_aps, delta=delta, m_antennas=M)


# ---------------------------------------------------------------------------
# coefficient vectors shared by the closed forms and the optimizer
# ---------------------------------------------------------------------------

def user_gain_matrix(stats: ChannelStatistics, part: UserPartition) -> np.ndarray:
    """a[l, k] = sqrt((M - |S_l|) gamma_{l,k}): coherent amplitude per link."""
    return np.sqrt(part.coherent_dims[:, None] * stats.gamma_users)


def user_leak_matrix(stats: ChannelStatistics, part: UserPartition) -> np.ndarray:
    """A[l, k] = sqrt(beta_{l,k} - delta_{l,k} gamma_{l,k}): interference amplitude."""
    return np.sqrt(np.maximum(stats.beta_users - part.delta * stats.gamma_users, 0.0))


def eve_gain_vector(stats: ChannelStatistics, part: UserPartition) -> np.ndarray:
    """b_e[l] = sqrt((M - |S_l|) gamma_{l,e})."""
    return np.sqrt(part.coherent_dims * stats.gamma_eve)


def eve_leak_vector(stats: ChannelStatistics, part: UserPartition, attacked_user: int) -> np.ndarray:
    """B_e[l] = sqrt(beta_{l,e} - delta_{l,a} gamma_{l,e}); a = attacked user."""
    return np.sqrt(np.maximum(stats.beta_eve - part.delta[:, attacked_user] * stats.gamma_eve, 0.0))


# ---------------------------------------------------------------------------
# closed-form SINRs, in both the per-term sum form and the quadratic form
# ---------------------------------------------------------------------------

def sinr_user(k: int, alloc: PowerAllocation, stats: ChannelStatistics,
              part: UserPartition) -> float:
    """Hardening-bound SINR of user k, accumulated term by term over links."""
    rho = alloc.rho_users
    rho_an = alloc.rho_an
    m = part.coherent_dims
    gamma_k = stats.gamma_users[:, k]
    leak_k = stats.beta_users[:, k] - part.delta[:, k] * stats.gamma_users[:, k]

    coherent = np.sum(np.sqrt(m * rho[:, k] * gamma_k)) ** 2
    interference = float(np.sum(rho * leak_k[:, None])) + float(np.sum(rho_an * leak_k))
    return coherent / (interference + 1.0)


def sinr_user_quad(k: int, alloc: PowerAllocation, stats: ChannelStatistics,
                   part: UserPartition) -> float:
    """Same SINR through the quadratic form (a_k^T u_k)^2 / phi_k(u)."""
    a_k = user_gain_matrix(stats, part)[:, k]
    A_k = user_leak_matrix(stats, part)[:, k]
    x = a_k @ alloc.u_users[:, k]
    phi = (np.linalg.norm(A_k[:, None] * alloc.u_users, "fro") ** 2
           + np.linalg.norm(A_k * alloc.u_an) ** 2 + 1.0)
    return x ** 2 / phi


def sinr_eve(alloc: PowerAllocation, stats: ChannelStatistics, part: UserPartition,
             attacked_user: int = 0) -> float:
    """Eavesdropper SINR while intercepting the attacked user's stream.

    Numerator: coherent contamination gain plus the full leakage power of the
    attacked user's signal; APs where that user is strong have their AN and
    interference suppressed down to the estimation-error level.
    """
    if not stats.eve_active:
        raise EveInactiveError("eavesdropper SINR requested but the attack is off (p_eve = 0)")
    a = attacked_user
    rho = alloc.rho_users
    rho_an = alloc.rho_an
    m = part.coherent_dims
    g_e = stats.gamma_eve
    b_e = stats.beta_eve
    in_z = part.delta[:, a]

    coherent = np.sum(np.sqrt(rho[:, a] * m * g_e)) ** 2
    num = coherent + float(np.sum(rho[:, a] * b_e)) - float(np.sum(rho[in_z, a] * g_e[in_z]))

    leak = b_e - in_z * g_e
    others = [t for t in range(stats.n_users) if t != a]
    den = float(np.sum(rho[:, others] * leak[:, None])) + float(np.sum(rho_an * leak)) + 1.0
    return num / den


def sinr_eve_quad(alloc: PowerAllocation, stats: ChannelStatistics, part: UserPartition,
                  attacked_user: int = 0) -> float:
    """Eavesdropper SINR through the quadratic ratio f_N(u) / f_D(u)."""
    if not stats.eve_active:
        raise EveInactiveError("eavesdropper SINR requested but the attack is off (p_eve = 0)")
    a = attacked_user
    b = eve_gain_vector(stats, part)
    B = eve_leak_vector(stats, part, a)
    u_a = alloc.u_users[:, a]
    f_n = (b @ u_a) ** 2 + np.linalg.norm(B * u_a) ** 2
    others = [t for t in range(stats.n_users) if t != a]
    f_d = (np.linalg.norm(B[:, None] * alloc.u_users[:, others], "fro") ** 2
           + np.linalg.norm(B * alloc.u_an) ** 2 + 1.0)
    return f_n / f_d


def evaluate(alloc: PowerAllocation, stats: ChannelStatistics, part: UserPartition,
             attacked_user: int = 0) -> PerformanceReport:
    """Full closed-form report; SSE is clamped at zero."""
    K = stats.n_users
    sinr = np.array([sinr_user(k, alloc, stats, part) for k in range(K)])
    se = np.log2(1.0 + sinr)
    if stats.eve_active:
        s_e = sinr_eve(alloc, stats, part, attacked_user)
        se_e = float(np.log2(1.0 + s_e))
        sse = max(0.0, float(se[attacked_user]) - se_e)
    else:
        s_e = se_e = sse = None
    return PerformanceReport(sinr_users=sinr, se_users=se, sinr_eve=s_e,
                             se_eve=se_e, sse_target=sse, attacked_user=attacked_user)


# ---------------------------------------------------------------------------
# precoders for one realization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Precoders:
    """Normalized per-AP precoding vectors for one channel realization."""

    w: np.ndarray              # (L, K, M) complex: PZF for strong, PMRT for weak
    v: np.ndarray              # (L, M) complex: artificial-noise direction


def build_precoders(real: ChannelRealization, part: UserPartition,
                    stats: ChannelStatistics, an_seed) -> Precoders:
    """PZF / PMRT / AN vectors, each scaled to unit expected norm.

    Strong users at AP l get pseudo-inverse columns of the estimated
    strong-user matrix; weak users and the AN direction are projected through
    B_l = I - H (H^H H)^{-1} H^H.
    """
    L, K, M = real.h_hat_users.shape
    rng = np.random.default_rng(an_seed)
    w = np.zeros((L, K, M), dtype=complex)
    v = np.zeros((L, M), dtype=complex)

    from .channel import _crandn
    a_iso = _crandn(rng, (L, M))

    for l in range(L):
        strong = part.strong_sets[l]
        m = M - strong.size
        if strong.size:
            Hs = real.h_hat_users[l, strong, :].T             # (M, |S|)
            gram = Hs.conj().T @ Hs
            if np.linalg.matrix_rank(gram) < strong.size:
                raise PrecoderRankError(f"estimated strong-user matrix rank-deficient at AP {l}")
            G = Hs @ np.linalg.inv(gram)                      # pseudo-inverse columns
            B = np.eye(M) - G @ Hs.conj().T
            for j, k in enumerate(strong):
                w[l, k] = G[:, j] * np.sqrt(m * stats.gamma_users[l, k])
        else:
            B = np.eye(M)
        for k in part.weak_sets[l]:
            w[l, k] = B @ real.h_hat_users[l, k] / np.sqrt(m * stats.gamma_users[l, k])
        v[l] = B @ a_iso[l] / np.sqrt(m)

    return Precoders(w=w, v=v)


# ---------------------------------------------------------------------------
# Monte Carlo oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleTerm:
    """One expectation estimate paired with its closed-form counterpart."""

    name: str
    index: tuple
    estimate: float
    closed_form: float
    std_error: float           # 0 for per-draw exact identities
    n_samples: int

    @property
    def passes(self) -> bool:
        if self.std_error == 0.0:
            return abs(self.estimate - self.closed_form) <= 1e-9
        return abs(self.estimate - self.closed_form) <= 5.0 * self.std_error


@dataclass
class OracleReport:
    terms: list

    @property
    def all_pass(self) -> bool:
        return all(t.passes for t in self.terms)

    def failures(self):
        return [t for t in self.terms if not t.passes]


class _Welford:
    """Streaming mean/variance with a deterministic chunk order."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, block):
        # block has the sample axis first
        x = np.real(block)
        n_b = x.shape[0]
        mean_b = x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        delta = mean_b - self.mean
        tot = self.n + n_b
        self.mean = self.mean + delta * (n_b / tot)
        self.m2 = self.m2 + m2_b + delta ** 2 * (self.n * n_b / tot)
        self.n = tot

    def std_error(self):
        var = self.m2 / max(self.n - 1, 1)
        return np.sqrt(var / self.n)


def _batched_precoders(batch: ChannelRealization, part: UserPartition,
                       stats: ChannelStatistics, rng):
    """Vectorized build_precoders over the sample axis (same math, batched)."""
    n, L, K, M = batch.h_hat_users.shape
    from .channel import _crandn
    w = np.zeros((n, L, K, M), dtype=complex)
    v = np.zeros((n, L, M), dtype=complex)
    a_iso = _crandn(rng, (n, L, M))

    for l in range(L):
        strong = part.strong_sets[l]
        m = M - strong.size
        if strong.size:
            Hs = np.transpose(batch.h_hat_users[:, l, strong, :], (0, 2, 1))   # (n, M, |S|)
            gram = np.einsum("nms,nmt->nst", Hs.conj(), Hs)
            ginv = np.linalg.inv(gram)
            G = np.einsum("nms,nst->nmt", Hs, ginv)
            B = np.eye(M)[None] - np.einsum("nms,nts->nmt", G, Hs.conj())
            for j, k in enumerate(strong):
                w[:, l, k, :] = G[:, :, j] * np.sqrt(m * stats.gamma_users[l, k])
        else:
            B = np.broadcast_to(np.eye(M, dtype=complex), (n, M, M))
        for k in part.weak_sets[l]:
            w[:, l, k, :] = np.einsum("nmt,nt->nm", B, batch.h_hat_users[:, l, k, :]) \
                / np.sqrt(m * stats.gamma_users[l, k])
        v[:, l, :] = np.einsum("nmt,nt->nm", B, a_iso[:, l, :]) / np.sqrt(m)
    return w, v


def oracle_expectations(stats: ChannelStatistics, part: UserPartition,
                        alloc: PowerAllocation, pilots: PilotConfig,
                        n_samples: int, seed, chunk: int = 20_000) -> OracleReport:
    """Estimate every expectation behind the closed-form SINRs by sampling.

    Terms covered, with their closed-form counterparts:
      * precoder normalizations E{||w||^2}, E{||v||^2} -> 1
      * ZF identities h_hat_k^H w_t = delta_kt sqrt((M-|S_l|) gamma) (exact)
      * coherent gains E{h^H w} -> sqrt((M-|S_l|) gamma) for users and Eve
      * rho-weighted coherent sum per user -> sum_l sqrt(rho (M-|S_l|) gamma)
      * data second moments E{|h_xi^H w_t|^2} -> beta - delta gamma
        (plus the coherent part (M-|S_l|) gamma on the own stream)
      * AN leakage E{|h_xi^H v|^2} -> beta - delta gamma
    """
    if n_samples < 1_000:
        raise ValueError("n_samples must be at least 1e3 for meaningful standard errors")
    L, K = stats.beta_users.shape
    M = part.m_antennas
    a = pilots.attacked_user
    m = part.coherent_dims
    delta = part.delta.astype(float)
    delta_a = delta[:, a]

    rng = np.random.default_rng(seed)
    acc = {
        "norm_w": _Welford((L, K)),
        "norm_v": _Welford((L,)),
        "coh_user": _Welford((L, K)),
        "coh_user_weighted": _Welford((K,)),
        "data2_user": _Welford((L, K, K)),      # E|h_{l,k}^H w_{l,t}|^2
        "an_user": _Welford((L, K)),
        "coh_eve": _Welford((L,)),
        "data2_eve": _Welford((L, K)),          # E|h_{l,e}^H w_{l,t}|^2
        "an_eve": _Welford((L,)),
    }
    zf_dev = 0.0
    proj_dev = 0.0

    sqrho = alloc.u_users     # sqrt(rho), (L, K)
    done = 0
    while done < n_samples:
        n_b = min(chunk, n_samples - done)
        batch = sample_realization_batch(stats, pilots, M, n_b, rng)
        w, v = _batched_precoders(batch, part, stats, rng)

        ip = np.einsum("nlkm,nltm->nlkt", batch.h_users.conj(), w)
        ip_e = np.einsum("nlm,nltm->nlt", batch.h_eve.conj(), w)
        ipv = np.einsum("nlkm,nlm->nlk", batch.h_users.conj(), v)
        ipv_e = np.einsum("nlm,nlm->nl", batch.h_eve.conj(), v)

        acc["norm_w"].add(np.sum(np.abs(w) ** 2, axis=3))
        acc["norm_v"].add(np.sum(np.abs(v) ** 2, axis=2))
        own = np.einsum("nlkk->nlk", ip)
        acc["coh_user"].add(np.real(own))
        acc["coh_user_weighted"].add(np.real(np.einsum("lk,nlk->nk", sqrho, own)))
        acc["data2_user"].add(np.abs(ip) ** 2)
        acc["an_user"].add(np.abs(ipv) ** 2)
        acc["coh_eve"].add(np.real(ip_e[:, :, a]))
        acc["data2_eve"].add(np.abs(ip_e) ** 2)
        acc["an_eve"].add(np.abs(ipv_e) ** 2)

        # exact per-draw identities on the estimated channels
        ip_hat = np.einsum("nlkm,nltm->nlkt", batch.h_hat_users.conj(), w)
        for l in range(L):
            strong = part.strong_sets[l]
            if strong.size == 0:
                continue
            sub = ip_hat[:, l][:, strong][:, :, strong]
            target = np.diag(np.sqrt(m[l] * stats.gamma_users[l, strong]))
            zf_dev = max(zf_dev, float(np.max(np.abs(sub - target[None]))))
            # B_l annihilates every strong estimate: h_hat_k^H v = 0
            proj_dev = max(proj_dev, float(np.max(np.abs(
                np.einsum("nkm,nm->nk", batch.h_hat_users[:, l, strong, :].conj(), v[:, l])))))
        done += n_b

    terms = []

    def emit(name, est_acc, closed):
        est = np.asarray(est_acc.mean)
        se = np.asarray(est_acc.std_error())
        closed = np.asarray(closed, dtype=float)
        for idx in np.ndindex(closed.shape):
            terms.append(OracleTerm(name=name, index=idx,
                                    estimate=float(est[idx]), closed_form=float(closed[idx]),
                                    std_error=float(se[idx]), n_samples=n_samples))

    beta = stats.beta_users
    gamma = stats.gamma_users
    emit("norm_w", acc["norm_w"], np.ones((L, K)))
    emit("norm_v", acc["norm_v"], np.ones(L))
    emit("coherent_user", acc["coh_user"], np.sqrt(m[:, None] * gamma))
    emit("coherent_user_weighted", acc["coh_user_weighted"],
         np.sum(np.sqrt(alloc.rho_users * m[:, None] * gamma), axis=0))

    # second moments of the data inner products at the users
    leak = beta - delta * gamma
    closed_data2 = np.repeat(leak[:, :, None], K, axis=2)         # (L, k, t)
    for k in range(K):
        closed_data2[:, k, k] += m * gamma[:, k]                  # own-stream coherent part
    emit("data2_user", acc["data2_user"], closed_data2)
    emit("an_leak_user", acc["an_user"], leak)

    leak_e = stats.beta_eve - delta_a * stats.gamma_eve
    emit("coherent_eve", acc["coh_eve"], np.sqrt(m * stats.gamma_eve))
    closed_data2_e = np.repeat(leak_e[:, None], K, axis=1)        # (L, t)
    closed_data2_e[:, a] += m * stats.gamma_eve
    emit("data2_eve", acc["data2_eve"], closed_data2_e)
    emit("an_leak_eve", acc["an_eve"], leak_e)

    terms.append(OracleTerm(name="zf_identity_max_dev", index=(), estimate=zf_dev,
                            closed_form=0.0, std_error=0.0, n_samples=n_samples))
    terms.append(OracleTerm(name="an_null_max_dev", index=(), estimate=proj_dev,
                            closed_form=0.0, std_error=0.0, n_samples=n_samples))
    return OracleReport(terms=terms)
