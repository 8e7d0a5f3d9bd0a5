import math

import numpy as np
import pytest
from scipy import stats

from src import dists
from src.errors import ConfigError, DomainError, UnsupportedSpecError
from src.invariants import check_walk_consistency
from src.rwmax import (ARRIVAL, SERVICE, MaxWalkStream, WalkSpec, conditional_step,
                       cramer_root, cross_test)
from src.utils import make_rng

from .conftest import ALPHA

EXP_ARRIVAL = WalkSpec(ARRIVAL, dists.exponential(1.0), 2.0)
ALWAYS_DOWN = WalkSpec(ARRIVAL, dists.deterministic(1.0), 2.0)


def brute_force_walks(spec, count, steps, rng):
    """Sommes partielles S_1..S_steps de marches non conditionnées"""
    bases = np.array([[spec.base.sample(rng) for _ in range(steps)] for _ in range(count)])
    if spec.flavor == ARRIVAL:
        increments = 1.0 - spec.a * bases
    else:
        increments = spec.scale * bases - 1.0
    return np.cumsum(increments, axis=1)


def test_cramer_root_arrival_exponential():
    theta = cramer_root(EXP_ARRIVAL)
    assert theta == pytest.approx(1.2564, abs=1e-4)
    assert math.exp(theta) / (1 + 2 * theta) == pytest.approx(1.0, abs=1e-10)


def test_cramer_root_service_exponential():
    spec = WalkSpec(SERVICE, dists.exponential(1.0), 0.7, 1)
    theta = cramer_root(spec)
    assert theta == pytest.approx(0.76, abs=0.01)
    assert math.exp(-theta) / (1 - 0.7 * theta) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("spec", [
    WalkSpec(ARRIVAL, dists.erlang(3, 6.0), 3.0),
    WalkSpec(SERVICE, dists.hyperexponential([0.3, 0.7], [1.0, 4.0]), 1.5, 2),
    WalkSpec(SERVICE, dists.uniform(0.5, 1.5), 1.6, 2),
])
def test_cramer_root_is_a_root(spec):
    theta = cramer_root(spec)
    assert theta > 0
    assert abs(math.expm1(spec.log_psi(theta))) <= 1e-10


def test_cramer_root_rejects_positive_drift():
    with pytest.raises(ConfigError):
        cramer_root(WalkSpec(ARRIVAL, dists.exponential(1.0), 0.5))


def test_cramer_root_without_positive_increments():
    with pytest.raises(UnsupportedSpecError):
        cramer_root(ALWAYS_DOWN)


def test_walk_spec_validation():
    with pytest.raises(ConfigError):
        WalkSpec("other", dists.exponential(1.0), 1.0)
    with pytest.raises(ConfigError):
        WalkSpec(SERVICE, dists.exponential(1.0), 1.0, 0)


def test_cross_test_never_crosses_downward_walk(rng):
    for gap in (0.0, 0.5, 10.0):
        outcome = cross_test(ALWAYS_DOWN, gap, rng)
        assert not outcome.crossed
        assert outcome.increments == ()


def test_cross_test_rejects_negative_gap(rng):
    with pytest.raises(DomainError):
        cross_test(EXP_ARRIVAL, -0.1, rng)


def test_crossing_segment_is_first_passage(rng):
    seen = 0
    for _ in range(2_000):
        outcome = cross_test(EXP_ARRIVAL, 1.0, rng)
        if not outcome.crossed:
            continue
        seen += 1
        partial = np.cumsum(outcome.increments)
        assert partial[-1] > 1.0
        assert np.all(partial[:-1] <= 1.0)
    assert seen > 0


@pytest.mark.slow
def test_cross_frequency_matches_brute_force():
    n = 20_000
    rng = make_rng(11)
    crossed = sum(cross_test(EXP_ARRIVAL, 1.0, rng).crossed for _ in range(n))
    # dérive −1 : après 120 pas la marche est ~120 sous son départ
    walks = brute_force_walks(EXP_ARRIVAL, n, 120, make_rng(12))
    brute = np.mean(walks.max(axis=1) > 1.0)
    p = crossed / n
    se = math.sqrt(p * (1 - p) / n + brute * (1 - brute) / n)
    assert abs(p - brute) < 3 * se


def test_conditional_step_on_downward_walk(rng):
    step = conditional_step(ALWAYS_DOWN, 0.5, rng)
    assert step.increment == -1.0
    assert step.drawn == 1


def test_conditional_step_stays_below_headroom(rng):
    steps = [conditional_step(EXP_ARRIVAL, 3.0, rng).increment for _ in range(2_000)]
    assert max(steps) < 3.0
    assert np.mean(steps) < EXP_ARRIVAL.drift


def test_conditional_step_rejects_negative_headroom(rng):
    with pytest.raises(DomainError):
        conditional_step(EXP_ARRIVAL, -1.0, rng)


@pytest.mark.slow
def test_conditional_step_matches_brute_force_conditioning():
    rng = make_rng(21)
    exact = [conditional_step(EXP_ARRIVAL, 3.0, rng).increment for _ in range(5_000)]
    walks = brute_force_walks(EXP_ARRIVAL, 8_000, 120, make_rng(22))
    kept = walks[walks.max(axis=1) < 3.0, 0]
    assert stats.ks_2samp(exact, kept).pvalue > ALPHA


def test_extend_downward_walk(rng):
    stream = MaxWalkStream(ALWAYS_DOWN, rng)
    stream.extend(20)
    assert stream.S[:21] == [-float(n) for n in range(21)]
    assert stream.M[:21] == stream.S[:21]


def test_extend_consistency(rng):
    stream = MaxWalkStream(EXP_ARRIVAL, rng, start=0.3)
    stream.extend(300)
    assert stream.determined_upto >= 300
    check_walk_consistency(stream)
    m, s = stream.M, stream.S
    for k in range(stream.determined_upto):
        assert m[k] == max(s[k], m[k + 1])


@pytest.mark.parametrize("spec", [EXP_ARRIVAL, WalkSpec(SERVICE, dists.erlang(2, 4.0), 2.5, 2)])
def test_extend_prefix_stability(spec):
    stepwise = MaxWalkStream(spec, make_rng(3))
    stepwise.extend(40)
    stepwise.extend(250)
    direct = MaxWalkStream(spec, make_rng(3))
    direct.extend(250)
    assert stepwise.S[:251] == direct.S[:251]
    assert stepwise.M[:251] == direct.M[:251]


def test_materialize_does_not_determine(rng):
    stream = MaxWalkStream(EXP_ARRIVAL, rng)
    stream.materialize(50)
    assert stream.end == 50
    assert stream.determined_upto == -1
    assert stream.proposal_increments == 0


def test_materialize_after_extend_respects_ceiling(rng):
    stream = MaxWalkStream(EXP_ARRIVAL, rng)
    stream.extend(10)
    stream.materialize(stream.end + 200)
    assert max(stream.S[stream.determined_upto + 1:]) < stream.ceiling
    check_walk_consistency(stream)


@pytest.mark.slow
def test_running_max_law_matches_brute_force():
    exact = []
    for r in range(4_000):
        exact.append(MaxWalkStream(EXP_ARRIVAL, make_rng(31, r)).max_at(0))
    walks = brute_force_walks(EXP_ARRIVAL, 8_000, 120, make_rng(32))
    brute = np.maximum(0.0, walks.max(axis=1))
    assert stats.ks_2samp(exact, brute).pvalue > ALPHA
