import math

import numpy as np
import pytest

from src import dists
from src.analytics import MmcParams, erlang_c_pmf, validate_mmc
from src.driver import DcftpConfig, detect_coalescence, run_replications, sample_stationary
from src.errors import ConfigError, ResourceCapError
from src.kw import TrafficTrace, kw_run

from .conftest import ALPHA


def mm2_config(**kwargs) -> DcftpConfig:
    return DcftpConfig(dists.exponential(3.0), dists.exponential(2.0), 2, **kwargs)


def test_detect_coalescence_at_first_index():
    upper = np.array([[0.0, 1.0], [0.0, 0.5]])
    assert detect_coalescence(upper, upper.copy(), np.array([-3.0, -1.0])) == 0


def test_detect_coalescence_never_equal():
    upper = np.array([[1.0], [2.0]])
    lower = np.array([[0.0], [0.5]])
    assert detect_coalescence(upper, lower, np.array([-3.0, -1.0])) is None


def test_detect_coalescence_requires_service_start_before_zero():
    upper = np.array([[0.0], [1.5]])
    assert detect_coalescence(upper, upper.copy(), np.array([-3.0, -1.0])) == 0
    assert detect_coalescence(upper[1:], upper[1:].copy(), np.array([-1.0])) is None


def test_detect_coalescence_single_server_hand_trace():
    trace = TrafficTrace.from_arrivals([-10.0, -8.0, -5.0, -3.0, -1.0], [3.0, 1.0, 1.0, 4.0, 1.0],
                                       next_arrival=1.0)
    upper = kw_run(trace, [2.0])
    lower = kw_run(trace, [0.0])
    # haute : 2, 3, 1, 0, 2 ; basse : 0, 1, 0, 0, 2
    np.testing.assert_allclose(upper[:, 0], [2.0, 3.0, 1.0, 0.0, 2.0])
    np.testing.assert_allclose(lower[:, 0], [0.0, 1.0, 0.0, 0.0, 2.0])
    assert detect_coalescence(upper, lower, trace.times) == 3


def test_detect_coalescence_shape_mismatch():
    with pytest.raises(ConfigError):
        detect_coalescence(np.zeros((2, 1)), np.zeros((3, 1)), np.zeros(2))


def test_config_rejects_unstable_and_atomic_laws():
    with pytest.raises(ConfigError, match="ρ ≥ 1"):
        DcftpConfig(dists.exponential(4.0), dists.exponential(2.0), 2)
    with pytest.raises(ConfigError):
        DcftpConfig(dists.deterministic(1.0), dists.exponential(2.0), 1)
    with pytest.raises(ConfigError):
        mm2_config(t0=0.0)
    with pytest.raises(ConfigError):
        mm2_config(a=3.0)


def test_config_accepts_flags_and_dicts():
    config = DcftpConfig("exp:3", {"kind": "exponential", "rate": 2.0}, 2)
    assert config.arrival == dists.exponential(3.0)
    assert config.rho == pytest.approx(0.75)
    assert config.drift_rate == pytest.approx(3.5)


def test_sample_is_a_valid_state():
    sample = sample_stationary(mm2_config(seed=1), replication=4)
    state = sample.z0
    assert state.servers == 2
    assert state.queue == 0 or state.busy == 2
    assert sample.coalescence_time >= 0
    assert sample.horizon == pytest.approx(10.0 * 2 ** sample.horizon_index)
    assert 0 <= sample.detection_index < sample.arrivals
    assert set(sample.renewals) == {0, 1, 2}


def test_same_seed_same_record():
    first = sample_stationary(mm2_config(seed=5), 3).to_record()
    second = sample_stationary(mm2_config(seed=5), 3).to_record()
    assert first == second


def test_different_replications_differ():
    records = [sample_stationary(mm2_config(seed=5), r).to_record() for r in range(4)]
    assert len({r["E0"] for r in records}) > 1


def test_record_schema():
    record = sample_stationary(mm2_config(seed=2, want_w1=True), 0).to_record()
    assert record["schema_version"] == 1
    for key in ("Q0", "R0", "E0", "number_in_system", "T_coalesce", "k_horizon", "horizon",
                "arrival_index", "detection_index", "arrivals", "renewals", "proposal_increments", "W1"):
        assert key in record
    assert len(record["W1"]) == 2
    assert record["W1"] == sorted(record["W1"])
    assert min(record["W1"]) >= 0


def test_arrival_index_counts_from_time_zero():
    for replication in range(3):
        record = sample_stationary(mm2_config(seed=9), replication).to_record()
        assert record["arrival_index"] == 1 - record["arrivals"]
        assert record["arrival_index"] <= 0
        assert 0 <= record["detection_index"] < record["arrivals"]


def test_w1_absent_unless_requested():
    assert "W1" not in sample_stationary(mm2_config(seed=2), 0).to_record()


@pytest.mark.parametrize("arrival, service, servers", [
    (dists.exponential(3.0), dists.exponential(2.0), 2),
    (dists.erlang(2, 4.0), dists.hyperexponential([0.4, 0.6], [1.0, 3.0]), 3),
    (dists.uniform(0.2, 0.6), dists.erlang(3, 6.0), 2),
])
def test_verify_mode_passes_invariants(arrival, service, servers):
    config = DcftpConfig(arrival, service, servers, seed=13, verify=True)
    for replication in range(4):
        sample_stationary(config, replication)


def test_resource_cap_reports_diagnostics():
    config = mm2_config(t0=1e-7, max_doublings=1)
    with pytest.raises(ResourceCapError) as excinfo:
        sample_stationary(config, 0)
    assert excinfo.value.exit_code == 3
    assert excinfo.value.diagnostics["replication"] == 0


def test_run_replications_sorted_and_reproducible():
    config = mm2_config(seed=6)
    samples = run_replications(config, 6, first=2)
    assert [s.replication for s in samples] == list(range(2, 8))
    again = run_replications(config, 6, first=2)
    assert [s.to_record() for s in samples] == [s.to_record() for s in again]


def test_run_replications_independent_of_workers():
    config = mm2_config(seed=6)
    serial = run_replications(config, 4, threads=1)
    parallel = run_replications(config, 4, threads=2)
    assert [s.to_record() for s in serial] == [s.to_record() for s in parallel]


def test_run_replications_rejects_bad_counts():
    with pytest.raises(ConfigError):
        run_replications(mm2_config(), 0)
    with pytest.raises(ConfigError):
        run_replications(mm2_config(), 2, threads=0)


@pytest.mark.slow
def test_low_load_empty_probability():
    params = MmcParams(0.1, 10.0, 2)
    samples = run_replications(params.config(seed=31), 5_000)
    p0 = erlang_c_pmf(params, 0)[0]
    empirical = np.mean([s.number_in_system == 0 for s in samples])
    assert abs(empirical - p0) < 3 * math.sqrt(p0 * (1 - p0) / len(samples))


@pytest.mark.slow
def test_mm2_number_in_system_matches_erlang_c():
    result, samples = validate_mmc(MmcParams(3.0, 2.0, 2), reps=5_000, seed=7, verify=True)
    assert len(samples) == 5_000
    assert result.p_value > ALPHA
    assert np.isfinite([s.coalescence_time for s in samples]).all()


@pytest.mark.slow
def test_mm10_number_in_system_matches_erlang_c():
    result, samples = validate_mmc(MmcParams(10.0, 2.0, 10), reps=5_000, seed=11, verify=True)
    assert len(samples) == 5_000
    assert result.p_value > ALPHA


@pytest.mark.slow
def test_mean_coalescence_time_is_stable():
    times = np.array([s.coalescence_time for s in run_replications(mm2_config(seed=41), 1_000)])
    assert np.isfinite(times).all()
    standard_error = times.std(ddof=1) / math.sqrt(len(times))
    assert standard_error < 0.1 * times.mean()
