import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from strategies import valid_timelines
from timeliner.errors import DataError
from timeliner.metrics import (
    MetricsReport,
    delta_series,
    evaluate,
    eye_closure_f1,
    fid,
    macro_f1,
    macro_f1_labels,
    match_clusters,
    matched_macro_f1,
    per_class_f1,
    region_labels,
    snd,
    tas,
    variance_metric,
)
from timeliner.timeline import Action, AnnotationSequence, Interval, Region, Timeline, timeline_to_frames


def seq(T, on=()):
    v = np.zeros((T, 16), np.int8)
    for action, frames in on:
        v[frames, action.index] = 1
    return AnnotationSequence(v)


def test_identical_is_one():
    a = seq(20, [(Action.BROW_UP, slice(3, 9))])
    assert macro_f1(a, a, Region.BROW) == 1.0


def test_hand_computed_confusion():
    gt = seq(10, [(Action.BROW_UP, slice(0, 5))])
    pred = seq(10)
    scores = per_class_f1(region_labels(pred, Region.BROW), region_labels(gt, Region.BROW))
    assert scores["BrowUp"] == 0.0
    assert scores["Neutral"] == pytest.approx(2 * 0.5 * 1 / 1.5)
    assert macro_f1(pred, gt, Region.BROW) == pytest.approx(1 / 3, abs=1e-6)


def test_absent_classes_do_not_count():
    # BrowDown appears in neither sequence, so the average is over two classes only
    assert macro_f1_labels(np.array(["a", "b"]), np.array(["a", "b"])) == 1.0
    gt = seq(4, [(Action.BROW_UP, slice(0, 2))])
    assert macro_f1(gt, gt, Region.BROW) == 1.0


def test_eye_scoring_skips_closed_frames():
    gt = seq(10, [(Action.EYE_CLOSE, slice(3, 6))])
    pred = seq(10, [(Action.EYE_SQUINT, slice(3, 6))])
    # squint on frames 3..5 is ignored because the ground-truth eye is closed there
    assert macro_f1(pred, gt, Region.EYE) == 1.0
    assert eye_closure_f1(pred, gt) == 0.0
    assert eye_closure_f1(gt, gt) == 1.0
    assert math.isnan(eye_closure_f1(seq(4), seq(4)))


def test_diagonal_gaze_is_its_own_class():
    a = seq(3, [(Action.GAZE_LEFT, slice(0, 2)), (Action.GAZE_UP, slice(1, 3))])
    assert region_labels(a, Region.GAZE).tolist() == ["GazeLeft", "GazeLeft+GazeUp", "GazeUp"]


def test_length_mismatch():
    with pytest.raises(DataError):
        macro_f1(seq(3), seq(4), Region.HEAD)


@given(valid_timelines())
def test_tas_of_exact_rendering_is_one(t):
    assert tas(t, timeline_to_frames(t)) == 1.0


def test_tas_averages_regions():
    t = Timeline.from_intervals(10, [Interval("BrowUp", 0, 5)])
    # brow scores 1/3, the other four regions are all-neutral agreements
    assert tas(t, seq(10)) == pytest.approx((1 / 3 + 4) / 5)


@given(hnp.arrays(np.int64, st.integers(1, 60), elements=st.integers(0, 3)))
def test_f1_frame_order_invariant(labels):
    rng = np.random.default_rng(len(labels))
    pred = (labels + rng.integers(0, 2, size=len(labels))) % 4
    perm = rng.permutation(len(labels))
    assert macro_f1_labels(pred, labels) == pytest.approx(macro_f1_labels(pred[perm], labels[perm]))


def test_matching_one_to_one_penalizes_extra_clusters():
    gt = np.array([0] * 10 + [1] * 10)
    split = np.array([0] * 10 + [1] * 5 + [2] * 5)
    assert matched_macro_f1(split, gt, one_to_one=False) == 1.0
    assert matched_macro_f1(split, gt, one_to_one=True) < 1.0
    assert match_clusters(split, gt)[2] is None


# ---------------------------------------------------------------------------
# distribution metrics


def test_variance_constant_is_zero():
    assert variance_metric([np.full((10, 3), 0.7)]) == 0.0


def test_variance_pooled_population():
    assert variance_metric([np.zeros(2), np.full(2, 2.0)]) == pytest.approx(1.0)


def test_variance_errors():
    with pytest.raises(DataError):
        variance_metric([])
    with pytest.raises(DataError):
        variance_metric([np.zeros((2, 2)), np.zeros((2, 3))])


def test_fid_identical_sets(rng):
    a = rng.normal(size=(200, 4))
    assert fid(a, a) <= 1e-8


def test_fid_mean_shift(rng):
    a = rng.normal(size=(300, 3))
    v = np.array([0.5, -2.0, 1.0])
    assert fid(a, a + v) == pytest.approx(v @ v, abs=1e-6)


def fid_reference(a, b):
    """Closed form evaluated at 50 digits with a general (non-symmetric) matrix root."""
    mpmath.mp.dps = 50

    def stats(x):
        mu = x.mean(axis=0)
        d = x - mu
        return mu, d.T @ d / len(x)

    mu_a, ca = stats(a)
    mu_b, cb = stats(b)
    A, B = mpmath.matrix(ca.tolist()), mpmath.matrix(cb.tolist())
    root = mpmath.sqrtm(A * B)
    tr = sum(A[i, i] + B[i, i] - 2 * root[i, i] for i in range(A.rows))
    diff = mu_a - mu_b
    return float(mpmath.re(tr)) + float(diff @ diff)


def test_fid_matches_high_precision_reference(rng):
    for _ in range(5):
        a = rng.normal(size=(40, 2)) @ rng.normal(size=(2, 2))
        b = rng.normal(size=(50, 2)) @ rng.normal(size=(2, 2)) + rng.normal(size=2)
        assert fid(a, b) == pytest.approx(fid_reference(a, b), rel=1e-8, abs=1e-10)


@given(hnp.arrays(np.float64, st.tuples(st.integers(5, 30), st.just(2)), elements=st.floats(-5, 5)),
       hnp.arrays(np.float64, st.tuples(st.integers(5, 30), st.just(2)), elements=st.floats(-5, 5)))
def test_fid_symmetric_and_nonnegative(a, b):
    x, y = fid(a, b), fid(b, a)
    assert x >= 0
    assert x == pytest.approx(y, abs=1e-8, rel=1e-6)


def test_fid_small_sample_regularized_with_warning():
    with pytest.warns(RuntimeWarning):
        assert fid(np.zeros((2, 3)), np.ones((2, 3))) == pytest.approx(3.0, abs=1e-5)


def test_fid_errors():
    with pytest.raises(DataError):
        fid(np.zeros((5, 2)), np.zeros((5, 3)))
    with pytest.raises(DataError):
        fid(np.zeros((0, 2)), np.zeros((5, 2)))


def test_delta_series_examples():
    assert delta_series(np.array([0.0, 1.0, 3.0])).ravel().tolist() == [1.0, 2.0]
    assert not delta_series(np.ones((5, 2))).any()
    ramp = 0.25 * np.arange(10.0)
    assert np.allclose(delta_series(ramp), 0.25)
    with pytest.raises(DataError):
        delta_series(np.zeros((1, 2)))


def test_snd_examples():
    assert snd(0.0, 0.0) == 0.0
    assert snd(1.5, 0.25) == 1.75
    assert snd(0.454, 0.009) == pytest.approx(0.463)


def test_report_snd_is_exact_sum():
    r = MetricsReport(fid_fm=0.1, fid_dfm=0.2)
    assert r.snd == 0.1 + 0.2


def test_evaluate_full(rng):
    t = Timeline.from_intervals(40, [Interval("Smile", 5, 20)])
    pred = timeline_to_frames(t)
    gen = [rng.normal(size=(40, 3)) for _ in range(3)]
    ref = [rng.normal(size=(40, 3)) for _ in range(3)]
    rep = evaluate([pred], [t], gen, ref, {"a": 1})
    assert rep.tas == 1.0
    assert rep.snd == rep.fid_fm + rep.fid_dfm
    d = rep.to_dict()
    assert d["eye_closure_f1"] is None
    assert "tas" in rep.to_table()
    assert rep.config_hash == evaluate([pred], [t], config={"a": 1}).config_hash
