import numpy as np
import pytest

from amal.assessment import (DeviatingSegment, assess_features, compute_score, format_report,
                             generate_feedback, normalized_deviation, segment_losses,
                             select_feedback, threshold)
from amal.features import CLASS_ACTIVE, CLASS_INACTIVE, CLASS_TIME
from amal.weights import ScoreWeights

SIZES = {CLASS_ACTIVE: 10, CLASS_INACTIVE: 20, CLASS_TIME: 5}


def seg(key, cls, dsum, n_frames=1, start=0, label="positive", kind="pos", loss=0.0):
    return DeviatingSegment(key, kind, 0, cls, start, start + n_frames - 1, label, 1.0, dsum, loss)


def test_deviation_below_threshold():
    D = normalized_deviation(3.0, [1.0, 1.0, 0.5], 0.0005)
    assert D == pytest.approx(1 / 0.5005)
    assert threshold(D, 2.5) == 0


def test_deviation_at_mean():
    D = normalized_deviation(2.0, [2.0, 0.3, 0.1], 0.0005)
    assert D <= 0 and threshold(D, 2.5) == 0


def test_epsilon_guards_zero_spread():
    D = normalized_deviation(1.01, [1.0, 0.0, 0.0], 0.0005)
    assert D == pytest.approx(20.0)
    assert threshold(D, 2.5) == pytest.approx(20.0)


def test_no_deviations_full_score():
    score, sub = compute_score([], SIZES)
    assert score == pytest.approx(1.0)
    assert sub == {"A": 1.0, "N": 1.0, "T": 1.0}


def test_saturated_time():
    segs = [seg(f"time:{k}", CLASS_TIME, 50.0, kind="time") for k in range(5)]
    score, sub = compute_score(segs, SIZES)
    assert sub["T"] == 0.0
    assert score == pytest.approx(0.75)


def test_single_active_half_saturated():
    score, sub = compute_score([seg("pos:0", CLASS_ACTIVE, 5.0)], SIZES)
    assert sub["A"] == pytest.approx(1 - 0.75 * 0.5 / 10)
    assert score == pytest.approx(0.73 * 0.9625 + 0.02 + 0.25)
    assert score == pytest.approx(0.9726, abs=5e-5)


def test_decay_only_on_active():
    _, sub = compute_score([seg("pos:0", CLASS_INACTIVE, 5.0)], SIZES)
    assert sub["N"] == pytest.approx(1 - 0.5 / 20)


def test_without_joint_grouping_weights_are_shared():
    segs = [seg("pos:0", CLASS_ACTIVE, 5.0), seg("pos:1", CLASS_INACTIVE, 10.0)]
    w = ScoreWeights()
    score, sub = compute_score(segs, SIZES, w, joint_grouping=False)
    half = (w.alpha_A + w.alpha_N) / 2
    assert score == pytest.approx(half * sub["A"] + half * sub["N"] + w.alpha_T * sub["T"])


def test_losses_are_marginal_gains():
    segs = [seg("pos:0", CLASS_ACTIVE, 5.0), seg("pos:0", CLASS_ACTIVE, 10.0, start=5),
            seg("pos:1", CLASS_INACTIVE, 10.0)]
    losses = segment_losses(segs, SIZES)
    base, _ = compute_score(segs, SIZES)
    for i in range(3):
        without, _ = compute_score(segs[:i] + segs[i + 1:], SIZES)
        assert losses[i] == pytest.approx(without - base)


def test_feedback_half_loss_rule():
    assert select_feedback([0.30, 0.20, 0.08], [0, 1, 2]) == [0, 1]


def test_feedback_cap():
    assert len(select_feedback([0.1] * 7, list(range(7)))) == 5


def test_feedback_ties_by_start():
    assert select_feedback([0.1, 0.1, 0.1], [2.0, 0.5, 1.0]) == [1, 2, 0]


def test_feedback_empty(side_model):
    model, _ = side_model
    assert generate_feedback(model, [], np.arange(model.reference_length) / model.fps) == []


def test_reference_features_score_high(side_model):
    model, _ = side_model
    from amal.features import FeatureSet
    feats = FeatureSet({k: model.triplets[k][..., 0].copy() for k in model.triplets},
                       model.time_triplets[:, 0].copy())
    result = assess_features(model, feats)
    assert result.score == pytest.approx(1.0)
    assert result.feedback == []
    assert format_report(result, score_only=True) == "score 1.000000\n"
