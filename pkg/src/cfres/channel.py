"""Uplink pilot training under an active pilot-copy attack.

The eavesdropper transmits the attacked user's pilot, so the MMSE estimate of
that user's channel is partially steered at the eavesdropper. Only the
inner-product structure of the orthonormal pilots matters, so pilot sequences
are never materialized; everything is expressed through the projected
observation y_{l,k}.
"""

from dataclasses import dataclass

import numpy as np

from .scenario import NetworkDrop

__all__ = [
    "PilotConfig",
    "ChannelStatistics",
    "ChannelRealization",
    "estimation_quality",
    "sample_realization",
    "sample_realization_batch",
]


@dataclass(frozen=True)
class PilotConfig:
    """Pilot length and linear pilot powers (same power units as the gains)."""

    tau_p: int
    p_users: np.ndarray        # (K,)
    p_eve: float
    attacked_user: int = 0     # 0-based index of the pilot the eavesdropper copies

    def __post_init__(self):
        p = np.asarray(self.p_users, dtype=float)
        object.__setattr__(self, "p_users", p)
        if self.tau_p < p.size:
            raise ValueError(f"tau_p={self.tau_p} < K={p.size}: orthonormal pilots do not exist")
        if np.any(p < 0) or self.p_eve < 0:
            raise ValueError("pilot powers must be non-negative")
        if not (0 <= self.attacked_user < p.size):
            raise ValueError(f"attacked_user={self.attacked_user} out of range for K={p.size}")


@dataclass(frozen=True)
class ChannelStatistics:
    """Large-scale gains plus the MMSE estimation-quality coefficients.

    gamma is the per-antenna variance of the channel estimate; beta - gamma is
    the per-antenna variance of the estimation error. eve_active records
    whether the eavesdropper transmitted pilot power at all.
    """

    beta_users: np.ndarray     # (L, K)
    beta_eve: np.ndarray       # (L,)
    gamma_users: np.ndarray    # (L, K)
    gamma_eve: np.ndarray      # (L,)
    eve_active: bool

    def __post_init__(self):
        if np.any(self.gamma_users < 0) or np.any(self.gamma_users > self.beta_users * (1 + 1e-12)):
            raise ValueError("gamma_users must satisfy 0 <= gamma <= beta")
        if np.any(self.gamma_eve < 0) or np.any(self.gamma_eve > self.beta_eve * (1 + 1e-12)):
            raise ValueError("gamma_eve must satisfy 0 <= gamma <= beta")

    @property
    def n_aps(self) -> int:
        return self.beta_users.shape[0]

    @property
    def n_users(self) -> int:
        return self.beta_users.shape[1]


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of true channels and their MMSE estimates."""

    h_users: np.ndarray        # (L, K, M) complex
    h_eve: np.ndarray          # (L, M) complex
    h_hat_users: np.ndarray    # (L, K, M) complex
    h_hat_eve: np.ndarray      # (L, M) complex


def estimation_quality(drop: NetworkDrop, pilots: PilotConfig) -> ChannelStatistics:
    """MMSE estimation quality for all links under the pilot-copy attack.

    For user k the contamination term is present only on the attacked pilot:

        gamma_{l,k} = tau_p p_k beta_{l,k}^2
                      / (tau_p p_k beta_{l,k} + delta_k tau_p p_e beta_{l,e} + 1)

    and for the eavesdropper (projected onto the attacked user's pilot):

        gamma_{l,e} = tau_p p_e beta_{l,e}^2
                      / (tau_p p_a beta_{l,a} + tau_p p_e beta_{l,e} + 1).
    """
    beta = drop.beta_users
    beta_e = drop.beta_eve
    tp = float(pilots.tau_p)
    p = pilots.p_users
    pe = float(pilots.p_eve)
    a = pilots.attacked_user

    delta = np.zeros(beta.shape[1])
    delta[a] = 1.0
    denom = tp * p[None, :] * beta + delta[None, :] * tp * pe * beta_e[:, None] + 1.0
    gamma_users = tp * p[None, :] * beta ** 2 / denom

    denom_e = tp * p[a] * beta[:, a] + tp * pe * beta_e + 1.0
    gamma_eve = tp * pe * beta_e ** 2 / denom_e

    return ChannelStatistics(
        beta_users=beta.copy(),
        beta_eve=beta_e.copy(),
        gamma_users=gamma_users,
        gamma_eve=gamma_eve,
        eve_active=pe > 0.0,
    )


def _crandn(rng, shape):
    """i.i.d. CN(0, 1) samples: independent real/imag parts of variance 1/2."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_realization_batch(stats: ChannelStatistics, pilots: PilotConfig,
                             n_antennas: int, n_samples: int, rng) -> ChannelRealization:
    """Draw n_samples realizations at once; arrays get a leading sample axis."""
    L, K = stats.beta_users.shape
    M = n_antennas
    tp = float(pilots.tau_p)
    p = pilots.p_users
    pe = float(pilots.p_eve)
    a = pilots.attacked_user

    h_users = np.sqrt(stats.beta_users)[None, :, :, None] * _crandn(rng, (n_samples, L, K, M))
    h_eve = np.sqrt(stats.beta_eve)[None, :, None] * _crandn(rng, (n_samples, L, M))
    noise = _crandn(rng, (n_samples, L, K, M))

    # projected observations; the eavesdropper contaminates only pilot a
    y = np.sqrt(tp * p)[None, None, :, None] * h_users + noise
    y[:, :, a, :] += np.sqrt(tp * pe) * h_eve

    delta = np.zeros(K)
    delta[a] = 1.0
    denom = tp * p[None, :] * stats.beta_users + delta[None, :] * tp * pe * stats.beta_eve[:, None] + 1.0
    coeff = np.sqrt(tp * p)[None, :] * stats.beta_users / denom
    h_hat_users = coeff[None, :, :, None] * y

    denom_e = tp * p[a] * stats.beta_users[:, a] + tp * pe * stats.beta_eve + 1.0
    coeff_e = np.sqrt(tp * pe) * stats.beta_eve / denom_e
    h_hat_eve = coeff_e[None, :, None] * y[:, :, a, :]

    return ChannelRealization(h_users=h_users, h_eve=h_eve,
                              h_hat_users=h_hat_users, h_hat_eve=h_hat_eve)


def sample_realization(stats: ChannelStatistics, pilots: PilotConfig,
                       n_antennas: int, seed) -> ChannelRealization:
    """Draw a single full small-scale realization with MMSE estimates."""
    rng = np.random.default_rng(seed)
    batch = sample_realization_batch(stats, pilots, n_antennas, 1, rng)
    return ChannelRealization(
        h_users=batch.h_users[0],
        h_eve=batch.h_eve[0],
        h_hat_users=batch.h_hat_users[0],
        h_hat_eve=batch.h_hat_eve[0],
    )
