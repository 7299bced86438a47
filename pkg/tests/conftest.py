import numpy as np
import pytest

from cfres.channel import PilotConfig, estimation_quality
from cfres.ppzf import partition_users
from cfres.scenario import ScenarioConfig, generate_drop
from cfres.sca import ServiceTargets


@pytest.fixture(scope="session")
def small_instance():
    """L=8, M=4, K=4 attacked instance with a feasible secrecy problem."""
    scen = ScenarioConfig(L=8, M=4, K=4, seed=21)
    drop = generate_drop(scen, 21)
    pilots = PilotConfig(tau_p=4, p_users=np.full(4, 100.0), p_eve=100.0, attacked_user=0)
    stats = estimation_quality(drop, pilots)
    part = partition_users(stats, 4, 0.1)
    targets = ServiceTargets(sse_des=3.0, se_des=np.full(4, 5.0),
                             se_min=np.full(4, 0.1), omega1=0.5, omega2=0.5)
    return dict(scen=scen, drop=drop, pilots=pilots, stats=stats, part=part,
                targets=targets, p_max=200.0)


@pytest.fixture(scope="session")
def oracle_instance():
    """Seeded L=2, M=4, K=3 instance for the expectation oracle."""
    scen = ScenarioConfig(L=2, M=4, K=3, seed=9)
    drop = generate_drop(scen, 9)
    pilots = PilotConfig(tau_p=3, p_users=np.full(3, 100.0), p_eve=100.0, attacked_user=0)
    stats = estimation_quality(drop, pilots)
    part = partition_users(stats, 4, 0.1)
    return dict(scen=scen, drop=drop, pilots=pilots, stats=stats, part=part)
