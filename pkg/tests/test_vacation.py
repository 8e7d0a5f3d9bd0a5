import math

import numpy as np
import pytest
from scipy import stats

from src import dists, invariants
from src.analytics import MmcParams, validate_vacation_qlen
from src.errors import ConfigError
from src.kw import kw_run
from src.rwmax import ARRIVAL, SERVICE
from src.vacation import VacationTimeline, build_streams, check_stability, w_v_at
from src.utils import make_rng

from .conftest import ALPHA


def mm2_timeline(replication: int = 0, seed: int = 4) -> VacationTimeline:
    return VacationTimeline(dists.exponential(3.0), dists.exponential(2.0), 2, a=3.5,
                            seed=seed, replication=replication)


class ScriptedStream:
    """Époques imposées en temps original (passé puis futur)"""

    def __init__(self, epochs):
        self.epochs = list(epochs)

    def original_epochs(self, horizon):
        yield from (t for t in self.epochs if t >= -horizon)


def test_check_stability_defaults_to_midpoint():
    assert check_stability(dists.exponential(3.0), dists.exponential(2.0), 2) == pytest.approx(3.5)


@pytest.mark.parametrize("arrival, service, servers, a", [
    (dists.exponential(5.0), dists.exponential(2.0), 2, None),
    (dists.exponential(3.0), dists.exponential(2.0), 2, 4.5),
    (dists.deterministic(1.0), dists.exponential(2.0), 1, None),
    (dists.exponential(1.0), dists.uniform(0.0, 1.0), 1, None),
])
def test_check_stability_rejects(arrival, service, servers, a):
    with pytest.raises(ConfigError):
        check_stability(arrival, service, servers, a)


def test_unstable_message_names_load():
    with pytest.raises(ConfigError, match="ρ ≥ 1"):
        check_stability(dists.exponential(4.0), dists.exponential(2.0), 2)


def test_epochs_are_distinct_across_streams():
    timeline = mm2_timeline()
    times, ids, jumps = timeline._events(0.0, 2_000.0)
    assert len(times) > 10_000
    assert np.all(np.diff(times) > 0)
    np.testing.assert_array_equal(jumps, np.where(ids == 0, 1, -1))


def test_arrival_stream_renewal_rate():
    timeline = VacationTimeline(dists.exponential(3.0), dists.exponential(2.0), 2, seed=8)
    horizon = 10_000.0
    rate = timeline.streams[0].count(horizon) / horizon
    assert abs(rate - 3.0) < 3 * math.sqrt(3.0 / horizon)


def test_first_service_epoch_is_equilibrium():
    first = [mm2_timeline(r).streams[1].first_epoch for r in range(2_000)]
    assert stats.kstest(first, stats.expon(scale=0.5).cdf).pvalue > ALPHA


def test_running_max_dominates_and_decreases():
    timeline = mm2_timeline(1)
    grid = np.linspace(0.0, 30.0, 61)
    maxima = [timeline.running_max_X(t) for t in grid]
    assert all(m >= timeline.X(t) for m, t in zip(maxima, grid))
    assert all(np.diff(maxima) <= 0)
    assert all(timeline.q_v(t) >= 0 for t in grid)


def test_running_max_rejects_negative_time():
    with pytest.raises(ConfigError):
        mm2_timeline().running_max_X(-1.0)


def test_q_v_is_horizon_free():
    timeline = mm2_timeline(2)
    before = [timeline.q_v(t) for t in (0.0, 3.0, 7.5)]
    timeline.extract_services(200.0)
    after = [timeline.q_v(t) for t in (0.0, 3.0, 7.5)]
    assert before == after


def test_to_frame_columns():
    frame = mm2_timeline(3).to_frame(20.0)
    assert list(frame.columns) == ["time", "stream_id", "X", "M", "Q_v"]
    assert (frame["Q_v"] >= 0).all()
    assert (frame["M"].diff().dropna() <= 0).all()
    steps = frame["X"].diff().dropna()
    expected = np.where(frame["stream_id"].iloc[1:] == 0, 1, -1)
    np.testing.assert_array_equal(steps.to_numpy(), expected)


def test_extract_services_hand_case():
    timeline = VacationTimeline(dists.exponential(1.0), dists.exponential(2.0), 1)
    timeline.streams = [ScriptedStream([-5.0, -4.0, 1.0, 2.5]),
                        ScriptedStream([-4.5, -3.0, -2.0, 0.5, 1.5, 3.0])]
    timeline.q_v = lambda t: 0

    trace = timeline.extract_services(5.5)
    np.testing.assert_allclose(trace.times, [-5.0, -4.0])
    np.testing.assert_allclose(trace.services, [1.5, 1.0])
    np.testing.assert_allclose(trace.delays, [0.5, 1.0])
    np.testing.assert_allclose(trace.interarrivals, [1.0, 5.0])
    assert trace.next_arrival == 1.0
    assert trace.backlog == ()
    np.testing.assert_allclose(w_v_at(trace, 0), [0.5])
    np.testing.assert_allclose(w_v_at(trace, 1), [1.0])


def test_extract_services_invariants():
    for replication in range(5):
        timeline = mm2_timeline(replication)
        trace = timeline.extract_services(40.0)
        invariants.check_fcfs_order(trace)
        invariants.check_wv_recursion(trace)
        invariants.check_upper_workload(trace)
        invariants.check_replay_conservation(trace, timeline.q_v(0.0))
        assert np.all(trace.times <= 0)
        assert trace.next_arrival > 0
        assert len(trace.backlog) <= trace.q_start


def test_w_v_vector_shape():
    trace = mm2_timeline(6).extract_services(30.0)
    for n in range(len(trace)):
        w = w_v_at(trace, n)
        assert w[0] == pytest.approx(trace.delays[n])
        assert np.all(np.diff(w) >= 0)
        assert np.all(w >= trace.delays[n])


def test_vacation_workload_dominates_empty_start():
    for replication in range(50):
        trace = mm2_timeline(replication, seed=9).extract_services(20.0)
        if len(trace) == 0:
            continue
        lower = kw_run(trace.traffic(), np.zeros(2))
        upper = np.array([w_v_at(trace, n) for n in range(len(trace))])
        assert np.all(lower <= upper + 1e-9)


def test_extension_keeps_assigned_services():
    timeline = mm2_timeline(7)
    short = timeline.extract_services(25.0)
    long = timeline.extract_services(100.0)
    k = len(short)
    np.testing.assert_array_equal(long.times[-k:], short.times)
    np.testing.assert_array_equal(long.services[-k:], short.services)
    np.testing.assert_array_equal(long.delays[-k:], short.delays)


@pytest.mark.slow
def test_extracted_services_are_iid_copies():
    timeline = VacationTimeline(dists.exponential(3.0), dists.exponential(2.0), 2, seed=17)
    trace = timeline.extract_services(3_500.0)
    services = trace.services
    assert len(services) > 10_000
    assert stats.kstest(services, stats.expon(scale=0.5).cdf).pvalue > ALPHA
    finite = np.isfinite(trace.interarrivals)
    corr = np.corrcoef(services[finite], trace.interarrivals[finite])[0, 1]
    assert abs(corr) < 3 / math.sqrt(len(services))


@pytest.mark.slow
def test_vacation_queue_is_geometric():
    result = validate_vacation_qlen(MmcParams(3.0, 2.0, 2), reps=5_000, seed=23, n_max=15)
    assert result.p_value > ALPHA


def test_timeline_rates():
    timeline = mm2_timeline()
    assert timeline.lam == pytest.approx(3.0)
    assert timeline.mu == pytest.approx(2.0)
    assert timeline.rho == pytest.approx(0.75)
    assert set(timeline.renewal_counts()) == {0, 1, 2}


def test_same_seed_same_timeline():
    first = mm2_timeline(11).extract_services(30.0)
    second = mm2_timeline(11).extract_services(30.0)
    np.testing.assert_array_equal(first.services, second.services)


def test_build_streams_one_arrival_stream_and_c_activity_streams():
    def factory(stream_id, purpose):
        return make_rng(12, 0, stream_id, purpose)

    streams = build_streams(dists.exponential(3.0), dists.erlang(2, 4.0), 3, 4.0, factory)
    assert [s.stream_id for s in streams] == [0, 1, 2, 3]
    assert [s.flavor for s in streams] == [ARRIVAL, SERVICE, SERVICE, SERVICE]
    assert all(s.first_epoch > 0 for s in streams)
    assert len({s.first_epoch for s in streams}) == 4
    again = build_streams(dists.exponential(3.0), dists.erlang(2, 4.0), 3, 4.0, factory)
    assert [s.first_epoch for s in again] == [s.first_epoch for s in streams]
