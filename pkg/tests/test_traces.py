import numpy as np
import pytest

from cfres.ppzf import PowerAllocation
from cfres.resilience import ResilienceTrace, TraceRecord
from cfres.traces import (
    config_hash,
    read_allocation,
    read_trace,
    write_allocation,
    write_trace,
)
from cfres.cli import ExperimentConfig
from dataclasses import replace


def _trace():
    records = (
        TraceRecord(1, 600.0, 0.4523, 0.5477, 1.0, 0.59293, False),
        TraceRecord(2, 700.0, 0.1234567890123456, 0.8765432109876544, 1.0, 0.888888, True),
        TraceRecord(3, 800.0, 0.1, 0.9, 0.625, 0.87, False),
    )
    return ResilienceTrace(t0_ms=500.0, t_d_ms=500.0, alpha_abs=0.321,
                           records=records, best_index=1)


def test_trace_round_trip_is_exact(tmp_path):
    trace = _trace()
    path = tmp_path / "trace.csv"
    write_trace(path, trace)
    assert read_trace(path) == trace


def test_trace_file_layout(tmp_path):
    path = tmp_path / "trace.csv"
    write_trace(path, _trace())
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if not ln.startswith("#")][0]
    assert header == "iter,t_ms,psi,alpha_ada,alpha_rec,alpha_overall,is_best"
    assert sum(1 for ln in lines if not ln.startswith("#")) == 4   # header + 3 rows


def test_trace_rejects_bad_header(tmp_path):
    path = tmp_path / "trace.csv"
    path.write_text("iter,t_ms,psi\n1,600.0,0.4\n")
    with pytest.raises(ValueError):
        read_trace(path)


def test_allocation_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    alloc = PowerAllocation(u_users=rng.uniform(0, 5, (6, 4)), u_an=rng.uniform(0, 5, 6))
    path = tmp_path / "alloc.txt"
    write_allocation(path, alloc)
    back = read_allocation(path)
    assert np.array_equal(back.u_users, alloc.u_users)
    assert np.array_equal(back.u_an, alloc.u_an)


def test_config_hash_tracks_semantic_changes():
    a = ExperimentConfig()
    b = ExperimentConfig()
    assert config_hash(a) == config_hash(b)
    c = replace(a, p_max_mw=250.0)
    assert config_hash(c) != config_hash(a)
    d = replace(a, resilience=replace(a.resilience, t_d_ms=600.0))
    assert config_hash(d) != config_hash(a)
    e = replace(a, scenario=replace(a.scenario, seed=2))
    assert config_hash(e) != config_hash(a)
