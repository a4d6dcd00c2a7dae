import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bistatic_tracker.errors import CoverageError, EmptyReportError
from bistatic_tracker.evaluation import ErrorReport, cdf_table, percentile, signed_cross_track, tracking_errors
from bistatic_tracker.scenario import make_waypoint_trajectory
from bistatic_tracker.tracking import TrackEstimate

from .reference_impl import nearest_rank


@pytest.fixture
def truth():
    return make_waypoint_trajectory([(0, 0), (10, 0), (10, 10)], 2.0, 0.005)


def _estimate(truth, times, offset=(0.0, 0.0)):
    pos = truth.position_at(times) + np.asarray(offset)
    n = len(times)
    return TrackEstimate(np.arange(n), times, pos, np.zeros((n, 2)), np.ones(n), 0.05)


def test_perfect_estimate_has_zero_error(truth):
    rep = tracking_errors(_estimate(truth, np.arange(0.3, 9.5, 0.05)), truth)
    assert np.all(rep.errors == 0)


def test_uniform_offset_gives_constant_error(truth):
    rep = tracking_errors(_estimate(truth, np.arange(0.3, 9.5, 0.05), (0.3, 0.4)), truth)
    np.testing.assert_allclose(rep.errors, 0.5, rtol=1e-12)


def test_no_time_overlap_is_a_coverage_error(truth):
    est = TrackEstimate(np.arange(3), np.array([20.0, 20.05, 20.1]), np.zeros((3, 2)), np.zeros((3, 2)), np.ones(3), 0.05)
    with pytest.raises(CoverageError):
        tracking_errors(est, truth)


def test_nearest_rank_examples():
    rep = ErrorReport("perfect_init", np.arange(10), np.round(np.arange(1, 11) * 0.1, 10))
    assert percentile(rep, 90) == 0.9
    single = ErrorReport("perfect_init", [0.0], [0.37])
    for q in (1, 50, 100):
        assert percentile(single, q) == 0.37


def test_empty_report_and_bad_rank():
    with pytest.raises(EmptyReportError):
        percentile(ErrorReport("noisy_init", [], []), 50)
    with pytest.raises(ValueError):
        percentile(ErrorReport("noisy_init", [0], [1.0]), 0)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=200), st.floats(0.01, 100))
def test_percentile_matches_reference(values, q):
    rep = ErrorReport("aoa_triangulation", np.arange(len(values)), values)
    assert percentile(rep, q) == nearest_rank(values, q)


@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=100))
def test_percentile_is_monotone_and_tops_out_at_max(values):
    rep = ErrorReport("aoa_triangulation", np.arange(len(values)), values)
    qs = np.linspace(1, 100, 40)
    ps = [percentile(rep, q) for q in qs]
    assert all(a <= b for a, b in zip(ps[:-1], ps[1:]))
    assert percentile(rep, 100) == max(values)


def test_report_serialisation_round_trip():
    rng = np.random.default_rng(0)
    rep = ErrorReport("baseline_maxpeak", rng.random(50), rng.random(50), meta={"seed": 3})
    back = ErrorReport.from_dict(rep.to_dict())
    np.testing.assert_array_equal(back.errors, rep.errors)
    np.testing.assert_array_equal(back.times, rep.times)
    assert back.label == rep.label and back.meta == rep.meta and back.percentiles == rep.percentiles


def test_cdf_table():
    rep = ErrorReport("perfect_init", [0, 1, 2, 3], [0.4, 0.1, 0.3, 0.2])
    np.testing.assert_allclose(cdf_table(rep), [[0.1, 0.25], [0.2, 0.5], [0.3, 0.75], [0.4, 1.0]])
    s = rep.summary()
    assert s["p90"] == 0.4 and s["count"] == 4


def test_cross_track_sign(truth):
    t = np.array([1.0, 2.0])  # on the first leg, heading +x
    left = truth.position_at(t) + [0.0, 0.2]
    right = truth.position_at(t) + [0.0, -0.3]
    np.testing.assert_allclose(signed_cross_track(left, t, truth), 0.2)
    np.testing.assert_allclose(signed_cross_track(right, t, truth), -0.3)
