import numpy as np
import pytest

from cfres.scenario import ScenarioConfig, generate_drop, path_loss_db


def test_path_loss_reference_points():
    assert path_loss_db(1.0) == pytest.approx(-30.5)
    assert path_loss_db(10.0) == pytest.approx(-67.2)
    assert path_loss_db(100.0) == pytest.approx(-103.9)


def test_path_loss_clamps_below_one_metre():
    assert path_loss_db(0.01) == path_loss_db(1.0)
    assert path_loss_db(0.0) == path_loss_db(1.0)


def test_drop_shapes_and_positivity():
    config = ScenarioConfig(L=40, M=4, K=10, eve_radius_m=100.0)
    drop = generate_drop(config, 7)
    assert drop.ap_positions.shape == (40, 2)
    assert drop.user_positions.shape == (10, 2)
    assert drop.beta_users.shape == (40, 10)
    assert drop.beta_eve.shape == (40,)
    assert np.all(drop.beta_users > 0) and np.all(np.isfinite(drop.beta_users))


def test_same_seed_is_bit_identical():
    config = ScenarioConfig(L=12, M=4, K=6)
    a = generate_drop(config, 123)
    b = generate_drop(config, 123)
    for name in ("ap_positions", "user_positions", "eve_position", "beta_users", "beta_eve"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    c = generate_drop(config, 124)
    assert not np.array_equal(a.beta_users, c.beta_users)


def test_eve_within_radius_of_user_one():
    config = ScenarioConfig(L=5, M=4, K=3, eve_radius_m=100.0)
    for seed in range(20):
        drop = generate_drop(config, seed)
        assert np.linalg.norm(drop.eve_position - drop.user_positions[0]) <= 100.0 + 1e-9


def test_zero_radius_puts_eve_on_user_one():
    config = ScenarioConfig(L=2, M=4, K=1, eve_radius_m=0.0)
    drop = generate_drop(config, 3)
    assert np.array_equal(drop.eve_position, drop.user_positions[0])


def test_beta_monotone_in_distance_without_shadowing():
    config = ScenarioConfig(L=30, M=4, K=8, shadow_sigma_db=0.0)
    drop = generate_drop(config, 11)
    d = np.linalg.norm(drop.ap_positions[:, None, :] - drop.user_positions[None, :, :], axis=2)
    d = np.maximum(d, 1.0)
    order = np.argsort(d.ravel())
    beta_sorted = drop.beta_users.ravel()[order]
    assert np.all(np.diff(beta_sorted) < 0)


def test_shadowing_statistics():
    # >= 1e5 links: recover the shadowing draws from beta and the geometry
    config = ScenarioConfig(L=250, M=4, K=400, shadow_sigma_db=4.0)
    drop = generate_drop(config, 2)
    d = np.linalg.norm(drop.ap_positions[:, None, :] - drop.user_positions[None, :, :], axis=2)
    pl = path_loss_db(d, config.pathloss_intercept_db, config.pathloss_exponent_db_per_decade)
    shadow = 10.0 * np.log10(drop.beta_users) + config.noise_power_dbm - pl
    assert shadow.size >= 100_000
    assert abs(shadow.mean()) < 0.1
    assert abs(shadow.std() - 4.0) < 0.08


@pytest.mark.parametrize("kwargs", [
    dict(L=0), dict(M=1), dict(K=0), dict(area_side_m=0.0),
    dict(eve_radius_m=-1.0), dict(shadow_sigma_db=-0.1),
    dict(noise_power_dbm=float("nan")), dict(area_side_m=float("inf")),
])
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(ValueError):
        ScenarioConfig(**kwargs)
