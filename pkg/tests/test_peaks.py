import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beatdiag import metrics, peaks
from beatdiag.ingest import ActivationCurve
from conftest import make_grid_annotation, make_pulse_activation


def curve(values, fps=50.0):
    return ActivationCurve(values=np.asarray(values, dtype=float), fps=fps, source_label="t")


def test_single_peak():
    est = peaks.pick_peaks(curve([0.0, 0.9, 0.0]))
    assert list(est) == [pytest.approx(0.02)]


def test_all_below_threshold_empty():
    est = peaks.pick_peaks(curve([0.1, 0.4, 0.1]))
    assert len(est) == 0


def test_close_peaks_keep_higher():
    values = np.zeros(20)
    values[5] = 0.8
    values[7] = 0.9
    est = peaks.pick_peaks(curve(values), peaks.PeakConfig(min_separation=0.1))
    assert list(est) == [pytest.approx(0.14)]


def test_equal_close_peaks_keep_earlier():
    values = np.zeros(20)
    values[5] = 0.9
    values[7] = 0.9
    est = peaks.pick_peaks(curve(values), peaks.PeakConfig(min_separation=0.1))
    assert list(est) == [pytest.approx(0.10)]


def test_plateau_first_frame():
    values = np.array([0.0, 0.8, 0.8, 0.8, 0.0])
    est = peaks.pick_peaks(curve(values))
    assert list(est) == [pytest.approx(1 / 50)]


def test_constant_curve_no_peaks():
    assert len(peaks.pick_peaks(curve([0.7] * 30))) == 0


def test_default_grid_has_twenty_values():
    grid = peaks.DEFAULT_THRESHOLD_GRID
    assert len(grid) == 20
    assert grid[0] == 0.05
    assert grid[-2:] == (0.95, 0.98)
    assert np.allclose(np.diff(grid[:-1]), 0.05)


activation_arrays = st.lists(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=120
).map(np.asarray)


@given(values=activation_arrays, thr_lo=st.floats(0.05, 0.9), thr_hi=st.floats(0.05, 0.9))
@settings(max_examples=300)
def test_raising_threshold_never_adds_peaks(values, thr_lo, thr_hi):
    thr_lo, thr_hi = sorted((thr_lo, thr_hi))
    act = curve(values)
    low = set(np.round(peaks.pick_peaks(act, peaks.PeakConfig(threshold=thr_lo)) * act.fps).astype(int))
    high = set(np.round(peaks.pick_peaks(act, peaks.PeakConfig(threshold=thr_hi)) * act.fps).astype(int))
    assert high <= low


@given(values=activation_arrays, min_sep=st.floats(0.0, 0.5))
@settings(max_examples=300)
def test_output_sorted_with_min_gaps(values, min_sep):
    act = curve(values)
    est = peaks.pick_peaks(act, peaks.PeakConfig(min_separation=min_sep))
    assert np.all(np.diff(est) > 0)
    if len(est) > 1:
        assert np.min(np.diff(est)) >= min_sep - 1 / act.fps


def test_sweep_clean_pulse_perfect_at_all_thresholds_below_peak():
    ref = make_grid_annotation(bpm=100, start=1.0, duration=30.0)
    act = make_pulse_activation(ref.beats, fps=50.0)
    sweep = peaks.sweep_threshold(act, ref)
    for thr, res in zip(sweep.thresholds, sweep.results):
        if thr < 0.9:
            assert res.f_measure == 1.0, thr


def test_best_threshold_dominates_default():
    rng = np.random.default_rng(11)
    ref = make_grid_annotation(bpm=90, start=1.0, duration=30.0)
    base = make_pulse_activation(ref.beats, fps=50.0)
    noisy = ActivationCurve(
        values=np.clip(base.values * 0.6 + rng.uniform(0, 0.3, len(base.values)), 0, 1),
        fps=50.0,
        source_label="n",
    )
    sweep = peaks.sweep_threshold(noisy, ref)
    default = peaks.pick_peaks(noisy, peaks.PeakConfig(threshold=0.5))
    default_f = metrics.f_measure(default, ref.beats)
    assert sweep.best_result.f_measure >= default_f - 1e-12


def test_sweep_tie_goes_to_lower_threshold():
    ref = make_grid_annotation(bpm=100, start=1.0, duration=20.0)
    act = make_pulse_activation(ref.beats, fps=50.0)
    sweep = peaks.sweep_threshold(act, ref, thresholds=(0.2, 0.4, 0.6))
    assert sweep.best_threshold == 0.2


def test_empty_threshold_grid_rejected():
    ref = make_grid_annotation(bpm=100)
    act = make_pulse_activation(ref.beats)
    with pytest.raises(ValueError):
        peaks.sweep_threshold(act, ref, thresholds=())
