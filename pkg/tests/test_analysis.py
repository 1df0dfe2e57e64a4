import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from havok.analysis import (
    LORENZ_THRESHOLD, EventList, activity, detect_transitions, excess_kurtosis,
    lead_time_stats, tail_report,
)
from havok.timeseries import TimeSeries


def ts_of(x, dt=0.01, t0=0.0):
    return TimeSeries(t0, dt, np.asarray(x, dtype=float))


def test_activity_constant_and_zero():
    a = activity(ts_of(np.full(500, 0.01)), LORENZ_THRESHOLD)
    assert a.segments == [(0, 500)] and a.fraction == 1.0
    z = activity(ts_of(np.zeros(500)))
    assert z.segments == [] and z.fraction == 0.0
    with pytest.raises(ValueError):
        activity(ts_of(np.zeros(5)), -1.0)


def test_activity_segments_maximal():
    x = np.array([0, 1, 1, 0, 0, 1, 0, 1, 1, 1], float)
    a = activity(ts_of(x), 0.5)
    assert a.segments == [(1, 3), (5, 6), (7, 10)]
    np.testing.assert_array_equal(a.mask, x**2 > 0.5)


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1, 1)),
       st.floats(0, 1), st.floats(0, 1))
def test_activity_monotone_in_threshold(x, t1, t2):
    lo, hi = sorted((t1, t2))
    a, b = activity(ts_of(x), lo), activity(ts_of(x), hi)
    assert not np.any(b.mask & ~a.mask)
    # segments are maximal runs of the mask
    rebuilt = np.zeros(len(x), bool)
    for s, e in a.segments:
        assert a.mask[s:e].all()
        assert s == 0 or not a.mask[s - 1]
        assert e == len(x) or not a.mask[e]
        rebuilt[s:e] = True
    np.testing.assert_array_equal(rebuilt, a.mask)


def test_detect_sine_zeros():
    dt = 0.001
    t = dt * np.arange(20_000)
    ev = detect_transitions(ts_of(np.sin(t), dt), 1.0)
    k = np.arange(1, len(ev) + 1)
    np.testing.assert_allclose(ev.times, k * np.pi, atol=1e-6)
    assert ev.directions.tolist() == [(-1) ** i for i in k]


def test_detect_positive_and_debounce():
    assert len(detect_transitions(ts_of(np.full(100, 2.0)), 0.5)) == 0
    x = np.array([1, -1, 1, -1, 1, 1, 1, 1, 1, 1, 1, 1, -1], float)
    ev = detect_transitions(ts_of(x, dt=0.1), 0.5)
    # crossings at 0.05, 0.15, 0.25, 0.35 merge into the first; 1.15 is kept
    np.testing.assert_allclose(ev.times, [0.05, 1.15])
    with pytest.raises(ValueError):
        detect_transitions(ts_of(x), 0.0)


def test_detect_touching_zero_is_not_event():
    x = np.array([1.0, 0.5, 0.0, 0.5, 1.0, 0.0, -1.0])
    ev = detect_transitions(ts_of(x, dt=1.0), 0.1)
    assert ev.indices.tolist() == [6]


@given(arrays(np.float64, st.integers(2, 300), elements=st.floats(-1, 1)),
       st.floats(1e-3, 1e3), st.floats(0.005, 0.5))
def test_detect_scale_invariant_and_matches_oracle(x, c, debounce):
    a = detect_transitions(ts_of(x), debounce)
    b = detect_transitions(ts_of(c * x), debounce)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert np.all(np.diff(a.times) >= debounce - 1e-12)
    ref = oracles.sign_changes(0.01 * np.arange(len(x)), x, debounce)
    np.testing.assert_allclose(a.times, ref, atol=1e-12)


def _events(times):
    times = np.asarray(times, float)
    return EventList(np.zeros(len(times), int), times, np.ones(len(times), int), 0.5)


def test_lead_all_active_and_never_active():
    on = activity(ts_of(np.ones(1000)), 0.5)
    st_on = lead_time_stats(_events([3.0, 6.5]), on, 1.0)
    assert st_on.hit_rate == 1.0
    np.testing.assert_allclose(st_on.leads, 1.0)
    off = activity(ts_of(np.zeros(1000)), 0.5)
    st_off = lead_time_stats(_events([3.0, 6.5]), off, 1.0)
    assert st_off.hit_rate == 0.0 and st_off.mean_lead is None


def test_lead_window_excludes_event_time():
    x = np.zeros(1000)
    x[500] = 1.0  # active only at t = 5.0
    act = activity(ts_of(x), 0.5)
    s = lead_time_stats(_events([5.0, 5.5, 6.2]), act, 1.0)
    assert s.hits.tolist() == [False, True, False]
    assert s.leads[1] == pytest.approx(0.5)


def test_lead_empty_and_uncovered():
    act = activity(ts_of(np.ones(100)), 0.5)
    s = lead_time_stats(_events([]), act, 1.0)
    assert s.hit_rate is None and s.mean_lead is None
    s = lead_time_stats(_events([0.3]), act, 1.0)  # window starts before the record
    assert s.hit_rate is None
    with pytest.raises(ValueError):
        lead_time_stats(_events([0.3]), act, 0.0)


@given(arrays(np.bool_, st.integers(50, 300)), st.lists(st.floats(0.0, 3.0), max_size=10),
       st.floats(0.05, 1.0))
def test_leads_within_horizon(mask, times, horizon):
    act = activity(ts_of(mask.astype(float)), 0.5)
    s = lead_time_stats(_events(sorted(times)), act, horizon)
    hit = s.leads[s.hits]
    assert np.all((hit > 0) & (hit <= horizon + 1e-12))
    assert np.all(np.isnan(s.leads[~s.hits]))


def test_kurtosis_gaussian_and_two_point():
    g = np.random.default_rng(2024).standard_normal(1_000_000)
    assert abs(excess_kurtosis(g)) <= 0.05
    assert excess_kurtosis(np.tile([-1.0, 1.0], 50)) == pytest.approx(-2.0, abs=1e-12)
    assert excess_kurtosis(g) == pytest.approx(oracles.excess_kurtosis(g), abs=1e-10)
    with pytest.raises(ValueError):
        excess_kurtosis(np.ones(10))


@given(st.integers(10, 200), st.integers(0, 1000))
def test_histogram_integrates_to_one(bins, seed):
    x = np.random.default_rng(seed).standard_t(3, size=500)
    rep = tail_report(x, bins)
    assert abs(np.sum(rep.density * np.diff(rep.edges)) - 1.0) <= 1e-6
    assert rep.std == pytest.approx(np.std(x))


def test_tail_report_errors():
    with pytest.raises(ValueError):
        tail_report(np.arange(50.0))
    with pytest.raises(ValueError):
        tail_report(np.arange(500.0), bins=5)
    with pytest.raises(ValueError):
        tail_report(np.ones(500))


@pytest.mark.slow
def test_lorenz_activity_fraction(lorenz):
    assert 0.05 < lorenz.activity.fraction < 0.60


@pytest.mark.slow
def test_lorenz_tail_heavy(lorenz):
    k = tail_report(lorenz.forcing).excess_kurtosis
    assert k > 1
    assert k == pytest.approx(oracles.excess_kurtosis(lorenz.forcing.values), rel=1e-9)
