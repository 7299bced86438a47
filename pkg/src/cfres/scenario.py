"""Random network drops: AP/user/eavesdropper geometry and large-scale fading.

Large-scale gains are stored relative to the noise power, so that a transmit
power in mW multiplied by a gain lands directly in SINR units (noise = 1).
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["ScenarioConfig", "NetworkDrop", "path_loss_db", "generate_drop"]


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and propagation parameters for one deployment scenario."""

    area_side_m: float = 1000.0
    L: int = 40                 # access points
    M: int = 4                  # antennas per AP
    K: int = 10                 # single-antenna users
    eve_radius_m: float = 100.0  # eavesdropper placed within this disc around user 1
    pathloss_intercept_db: float = -30.5
    pathloss_exponent_db_per_decade: float = 36.7
    shadow_sigma_db: float = 4.0
    noise_power_dbm: float = -96.0
    seed: int = 1

    def __post_init__(self):
        if self.L < 1 or self.M < 2 or self.K < 1:
            raise ValueError(f"need L >= 1, M >= 2, K >= 1; got L={self.L}, M={self.M}, K={self.K}")
        if not (self.area_side_m > 0):
            raise ValueError(f"area_side_m must be positive, got {self.area_side_m}")
        if not (self.eve_radius_m >= 0):
            raise ValueError(f"eve_radius_m must be non-negative, got {self.eve_radius_m}")
        if not (self.shadow_sigma_db >= 0):
            raise ValueError(f"shadow_sigma_db must be non-negative, got {self.shadow_sigma_db}")
        for name in ("area_side_m", "eve_radius_m", "pathloss_intercept_db",
                     "pathloss_exponent_db_per_decade", "shadow_sigma_db", "noise_power_dbm"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)}")


@dataclass(frozen=True)
class NetworkDrop:
    """One random placement plus its noise-normalized large-scale gains.

    beta_users is L x K, beta_eve is length L; both are linear-scale gains per
    mW of transmit power (the noise power has already been divided out).
    """

    ap_positions: np.ndarray      # (L, 2) metres
    user_positions: np.ndarray    # (K, 2) metres
    eve_position: np.ndarray      # (2,) metres
    beta_users: np.ndarray        # (L, K)
    beta_eve: np.ndarray          # (L,)

    def __post_init__(self):
        for name in ("beta_users", "beta_eve"):
            b = getattr(self, name)
            if not np.all(np.isfinite(b)) or np.any(b <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")


def path_loss_db(distance_m, intercept_db=-30.5, exponent_db_per_decade=36.7):
    """Log-distance path loss in dB; distances are clamped below at 1 m."""
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    return intercept_db - exponent_db_per_decade * np.log10(d)


def generate_drop(config: ScenarioConfig, seed=None) -> NetworkDrop:
    """Draw one random network placement and its large-scale fading.

    APs and users are uniform over the square; the eavesdropper is uniform
    over the disc of radius eve_radius_m centred on user 1 (kept as drawn,
    even if the disc pokes out of the square). The draw order is fixed
    (APs, users, Eve offset, user shadowing, Eve shadowing), so identical
    (config, seed) pairs give bit-identical drops.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    side = config.area_side_m

    ap_positions = rng.uniform(0.0, side, size=(config.L, 2))
    user_positions = rng.uniform(0.0, side, size=(config.K, 2))

    # uniform over the disc: radius via sqrt transform
    radius = config.eve_radius_m * np.sqrt(rng.uniform())
    angle = rng.uniform(0.0, 2.0 * np.pi)
    eve_position = user_positions[0] + radius * np.array([np.cos(angle), np.sin(angle)])

    d_users = np.linalg.norm(ap_positions[:, None, :] - user_positions[None, :, :], axis=2)
    d_eve = np.linalg.norm(ap_positions - eve_position[None, :], axis=1)

    pl_users = path_loss_db(d_users, config.pathloss_intercept_db, config.pathloss_exponent_db_per_decade)
    pl_eve = path_loss_db(d_eve, config.pathloss_intercept_db, config.pathloss_exponent_db_per_decade)

    shadow_users = rng.normal(0.0, config.shadow_sigma_db, size=(config.L, config.K))
    shadow_eve = rng.normal(0.0, config.shadow_sigma_db, size=config.L)

    # divide out the noise power so downstream SINRs use "+ 1" for noise
    beta_users = 10.0 ** ((pl_users + shadow_users - config.noise_power_dbm) / 10.0)
    beta_eve = 10.0 ** ((pl_eve + shadow_eve - config.noise_power_dbm) / 10.0)

    return NetworkDrop(
        ap_positions=ap_positions,
        user_positions=user_positions,
        eve_position=eve_position,
        beta_users=beta_users,
        beta_eve=beta_eve,
    )
