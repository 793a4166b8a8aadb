from __future__ import annotations

import io
import math
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from agentflow.errors import InvalidThreshold, TooFewRows, ZeroVariance
from agentflow.fusion import (
    DEGRADED,
    LOW_CONFIDENCE,
    OK,
    RESULT_COLUMNS,
    FusionParams,
    ObservationWindow,
    average,
    closeness,
    confidence,
    correlation,
    correlation_squared,
    fuse,
    read_sensor_trace,
    run_fusion,
    write_results,
)
from oracles import fusion_oracle, scalar_correlation, sensor_trace

W = ObservationWindow.of


def oracle_for(rows, p: FusionParams):
    return fusion_oracle(rows, window=p.window, closeness_threshold=p.closeness_threshold,
                         confidence_threshold=p.confidence_threshold, rho=p.rho, cap=p.cap, history=p.history)


def assert_matches_oracle(results, expected, tol=1e-9):
    assert len(results) == len(expected)
    for got, want in zip(results, expected):
        for key, value in want.items():
            actual = getattr(got, key)
            if isinstance(value, float):
                assert math.isclose(actual, value, rel_tol=0, abs_tol=tol), (got.window_index, key)
            else:
                assert actual == value, (got.window_index, key)


# -- correlation ---------------------------------------------------------------

def test_identical_series():
    assert correlation(W([(1, 1), (2, 2), (3, 3)])) == 1.0


def test_decreasing_affine_series():
    assert correlation(W([(1, 5), (2, 3), (3, 1)])) == -1.0


def test_partial_correlation():
    assert math.isclose(correlation(W([(1, 2), (2, 1), (3, 4)])), 6 / math.sqrt(84), abs_tol=1e-12)


def test_constant_series():
    with pytest.raises(ZeroVariance):
        correlation(W([(1, 1), (2, 1), (3, 1)]))


def test_window_needs_two_pairs():
    with pytest.raises(ValueError):
        W([(1, 1)])


pairs_st = st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=32)


@settings(max_examples=200, deadline=None)
@given(pairs_st)
def test_correlation_symmetric_and_bounded(pairs):
    try:
        r = correlation(W(pairs))
    except ZeroVariance:
        assert scalar_correlation(pairs) is None
        return
    assert -1.0 <= r <= 1.0
    assert math.isclose(r, correlation(W([(b, a) for a, b in pairs])), abs_tol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=3, max_size=16),
       st.floats(0.5, 4), st.floats(-10, 10))
def test_correlation_affine_invariant(pairs, scale, shift):
    assume(scalar_correlation(pairs) is not None)
    moved = [(a * scale + shift, b) for a, b in pairs]
    assert math.isclose(correlation(W(pairs)), correlation(W(moved)), abs_tol=1e-9)


def test_correlation_squared():
    assert correlation_squared(1.0) == 1.0
    assert correlation_squared(-1.0) == 1.0
    assert correlation_squared(0.5) == 0.25


# -- closeness, average, confidence -------------------------------------------

@pytest.mark.parametrize("a,b,t,expected", [
    (10, 10, 20, (1.0, 1.0)), (10, 15, 20, (0.75, 0.75)), (0, 30, 20, (-0.5, 0.0))])
def test_closeness_values(a, b, t, expected):
    assert closeness(a, b, t) == expected


def test_closeness_bad_threshold():
    with pytest.raises(InvalidThreshold):
        closeness(1, 2, 0)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.1, 100), st.floats(1.01, 4))
def test_closeness_monotone_in_threshold(a, b, t, factor):
    raw, gamma = closeness(a, b, t)
    assert raw <= 1.0 and 0.0 <= gamma <= 1.0
    assert closeness(a, b, t * factor)[1] >= gamma


def test_average():
    assert average(4, 6) == 5 and average(3.5, 3.5) == 3.5 and average(-1, 1) == 0


def test_confidence_examples():
    assert confidence([1.0], 1.0) == 1.0
    assert math.isclose(confidence([0.25], 0.8), 0.2)
    assert confidence([0.9, 0.25, 0.81], 1.0) == 0.25
    with pytest.raises(ValueError):
        confidence([], 1.0)


# -- fuse ------------------------------------------------------------------------

P = FusionParams(confidence_threshold=0.5, closeness_threshold=20, rho=1.25, cap=100)


def test_fuse_confident():
    assert fuse(5.0, 0.9, P, 4.0) == (5.0, OK, None)


def test_fuse_low_confidence_holds_previous():
    fused, flag, fb = fuse(5.0, 0.1, P, 4.0)
    assert (fused, flag) == (4.0, LOW_CONFIDENCE)
    assert fb == {"closeness_threshold": 25.0}


def test_fuse_first_window_low_confidence():
    fused, flag, fb = fuse(5.0, 0.1, P, None)
    assert (fused, flag) == (5.0, DEGRADED) and fb is not None


def test_fuse_zero_variance():
    assert fuse(5.0, 0.0, P, 4.0, degraded=True) == (4.0, DEGRADED, None)


def test_feedback_respects_cap():
    assert fuse(5.0, 0.1, P, 4.0, closeness_threshold=90.0)[2] == {"closeness_threshold": 100.0}


@pytest.mark.parametrize("kw", [
    {"closeness_threshold": 0}, {"confidence_threshold": 1.5}, {"window": 1}, {"rho": 1.0},
    {"cap": 5.0}, {"history": 0}])
def test_invalid_params(kw):
    with pytest.raises(InvalidThreshold):
        FusionParams(**kw)


# -- pipeline --------------------------------------------------------------------

def test_equal_sensors_pipeline():
    results, _ = run_fusion([(1, 1), (2, 2), (3, 3)], FusionParams(window=3))
    (r,) = results
    assert (r.fused, r.confidence, r.flag) == (2.0, 1.0, OK)


def test_constant_equal_series_pipeline():
    results, _ = run_fusion([(5, 5)] * 4, FusionParams(window=4))
    (r,) = results
    assert (r.r, r.zero_variance, r.confidence, r.flag) == (0.0, True, 0.0, DEGRADED)


def test_pipeline_matches_oracle_on_random_trace():
    rows = sensor_trace(random.Random(11), 100)
    p = FusionParams(window=5, closeness_threshold=2.0, confidence_threshold=0.6, rho=1.5, cap=12.0)
    results, _ = run_fusion(rows, p, seed=3)
    assert_matches_oracle(results, oracle_for(rows, p))


def test_threshold_adaptation_is_monotone_and_capped():
    rows = sensor_trace(random.Random(2), 400)
    p = FusionParams(window=8, closeness_threshold=1.0, confidence_threshold=0.9, rho=2.0, cap=10.0)
    results, system = run_fusion(rows, p)
    seen = [r.closeness_threshold for r in results]
    assert seen == sorted(seen) and seen[-1] == 10.0 and seen[0] == 1.0
    assert system.agents["A2"].state.beliefs["closeness_threshold"] == 10.0


def test_pipeline_seed_does_not_change_results():
    rows = sensor_trace(random.Random(5), 64)
    assert run_fusion(rows, seed=1)[0] == run_fusion(rows, seed=2)[0]


def test_too_few_rows():
    with pytest.raises(TooFewRows):
        run_fusion([(1, 2)] * 3, FusionParams(window=4))


# -- csv -------------------------------------------------------------------------

def test_read_sensor_trace():
    rows = read_sensor_trace(io.StringIO("step,s1,s2\n0,1.4,2.6\n1,3,4\n"), quantize=True)
    assert rows == [(1.0, 3.0), (3.0, 4.0)]


@pytest.mark.parametrize("text", ["s1,s2\n1,2\n", "step,s1,s2\n1,2\n", "step,s1,s2\n2,1,1\n1,1,1\n",
                                  "step,s1,s2\n1,nan,1\n"])
def test_read_sensor_trace_rejects(text):
    with pytest.raises(ValueError):
        read_sensor_trace(io.StringIO(text))


def test_write_results_round_trips_floats():
    rows = sensor_trace(random.Random(8), 32)
    results, _ = run_fusion(rows)
    buf = io.StringIO()
    write_results(buf, results)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == RESULT_COLUMNS and len(lines) == 1 + len(results)
    assert float(lines[1].split(",")[6]) == results[0].fused
