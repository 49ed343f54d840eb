"""Deviation scoring and feedback for a video already aligned to a trained model."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from .features import (CLASS_ACTIVE, CLASS_INACTIVE, CLASS_TIME, FRAME_KINDS, FeatureSet,
                       describe_time, time_key)
from .model import TrainedModel
from .segmentation import frame_labels, segment_batch
from .weights import ScoreWeights

MAX_FEEDBACK_ITEMS = 5


class AssessmentError(ValueError):
    pass


def normalized_deviation(value, triplet, epsilon: float) -> np.ndarray:
    """(|value - mean| - dev_mean) / (dev_std + epsilon)."""
    triplet = np.asarray(triplet, dtype=float)
    d = np.abs(np.asarray(value, dtype=float) - triplet[..., 0])
    return (d - triplet[..., 1]) / (triplet[..., 2] + epsilon)


def threshold(D, gamma: float) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    return np.where(D > gamma, D, 0.0)


@dataclass
class DeviationSeries:
    key: str
    values: np.ndarray  # signed normalized deviation, sign of (value - mean)
    thresholded: np.ndarray
    signs: np.ndarray


@dataclass
class Deviations:
    """Normalized deviations per kind: arrays shaped like the feature arrays."""

    normalized: Dict[str, np.ndarray]
    thresholded: Dict[str, np.ndarray]
    signs: Dict[str, np.ndarray]
    time_normalized: np.ndarray
    time_thresholded: np.ndarray
    time_signs: np.ndarray

    def series(self, model: TrainedModel) -> Iterator[DeviationSeries]:
        for kind in FRAME_KINDS:
            for s in range(self.thresholded[kind].shape[1]):
                sign = self.signs[kind][:, s]
                yield DeviationSeries(model.layout.series_key(kind, s),
                                      np.abs(self.normalized[kind][:, s]) * sign,
                                      self.thresholded[kind][:, s], sign)
        for k in range(len(self.time_thresholded)):
            sign = self.time_signs[k:k + 1]
            yield DeviationSeries(time_key(k), np.abs(self.time_normalized[k:k + 1]) * sign,
                                  self.time_thresholded[k:k + 1], sign)


def compute_deviations(model: TrainedModel, features: FeatureSet,
                       weights: ScoreWeights = ScoreWeights()) -> Deviations:
    norm, thr, signs = {}, {}, {}
    for kind in FRAME_KINDS:
        values = features.frames[kind]
        tri = model.triplets[kind]
        if values.shape != tri.shape[:2]:
            raise AssessmentError(
                f"{kind} features have shape {values.shape}, model expects {tri.shape[:2]}")
        D = normalized_deviation(values, tri, weights.epsilon)
        missing = ~np.isfinite(D)
        D[missing] = 0.0
        norm[kind] = D
        thr[kind] = threshold(D, weights.gamma)
        signs[kind] = np.where(missing, 0.0, np.sign(values - tri[..., 0]))
    if len(features.time) != len(model.time_triplets):
        raise AssessmentError(f"expected {len(model.time_triplets)} time parameters, "
                              f"got {len(features.time)}")
    tD = normalized_deviation(features.time, model.time_triplets, weights.epsilon)
    tmiss = ~np.isfinite(tD)
    # a time the video could not provide (its rests were not found) counts as saturated
    unmeasured = np.isnan(np.asarray(features.time, dtype=float))
    tD[tmiss] = np.where(unmeasured[tmiss], max(weights.d_cap, weights.gamma) * (1 + 1e-9), 0.0)
    tsign = np.where(tmiss, 0.0, np.sign(features.time - model.time_triplets[:, 0]))
    return Deviations(norm, thr, signs, tD, threshold(tD, weights.gamma), tsign)


@dataclass
class DeviatingSegment:
    key: str
    kind: str
    series: int
    param_class: str
    start: int
    end: int  # inclusive
    label: str
    confidence: float
    deviation_sum: float  # sum of thresholded deviations over the segment's frames
    loss: float = 0.0

    @property
    def n_frames(self) -> int:
        return self.end - self.start + 1

    @property
    def mean_deviation(self) -> float:
        return self.deviation_sum / self.n_frames


@dataclass
class FeedbackItem:
    key: str
    description: str
    direction: str
    start_time: float
    end_time: float
    loss: float
    text: str


@dataclass
class AssessmentResult:
    score: float
    subscores: Dict[str, float]
    segments: List[DeviatingSegment]
    feedback: List[FeedbackItem] = field(default_factory=list)
    warp_fallback: bool = False


def _runs(labels: np.ndarray):
    """Maximal runs of equal non-zero labels as (start, end, label)."""
    out = []
    i = 0
    n = len(labels)
    while i < n:
        if labels[i] == 0:
            i += 1
            continue
        j = i
        while j + 1 < n and labels[j + 1] == labels[i]:
            j += 1
        out.append((i, j, int(labels[i])))
        i = j + 1
    return out


_LABEL_NAMES = {1: "positive", 2: "negative"}


def deviating_segments(model: TrainedModel, dev: Deviations, weights: ScoreWeights = ScoreWeights(),
                       segmentation: bool = True, batch_cells: int = 4_000_000) -> List[DeviatingSegment]:
    """Segments whose class is not ``none``, over all parameters.

    With ``segmentation`` off, every maximal run of same-signed thresholded
    frames counts as a deviating segment.
    """
    out = []
    for kind in FRAME_KINDS:
        thr = dev.thresholded[kind]
        if thr.size == 0:
            continue
        classes = model.layout.classes(kind, model.active)
        labels = frame_labels(thr, dev.signs[kind]).T  # (series, frames)
        candidates = np.flatnonzero((thr > 0).any(axis=0))
        n = thr.shape[0]
        if not segmentation:
            for s in candidates:
                for a, b, lab in _runs(labels[s]):
                    out.append(DeviatingSegment(
                        model.layout.series_key(kind, s), kind, int(s), str(classes[s]), a, b,
                        _LABEL_NAMES[lab], 1.0, float(thr[a:b + 1, s].sum())))
            continue
        chunk = max(1, batch_cells // (n * n))
        for c0 in range(0, len(candidates), chunk):
            sel = candidates[c0:c0 + chunk]
            segs, _ = segment_batch(labels[sel], weights)
            for s, seg_list in zip(sel, segs):
                for seg in seg_list:
                    if seg.label == "none":
                        continue
                    out.append(DeviatingSegment(
                        model.layout.series_key(kind, s), kind, int(s), str(classes[s]),
                        seg.start, seg.end, seg.label, seg.confidence,
                        float(thr[seg.start:seg.end + 1, s].sum())))
    for k in np.flatnonzero(dev.time_thresholded > 0):
        label = {1.0: "positive", -1.0: "negative"}.get(float(dev.time_signs[k]), "unstable")
        out.append(DeviatingSegment(time_key(int(k)), "time", int(k), CLASS_TIME, 0, 0, label, 1.0,
                                    float(dev.time_thresholded[k])))
    return out


def class_sizes(model: TrainedModel) -> Dict[str, int]:
    """Number of parameter series per class."""
    sizes = {CLASS_ACTIVE: 0, CLASS_INACTIVE: 0, CLASS_TIME: len(model.time_triplets)}
    for kind in FRAME_KINDS:
        classes = model.layout.classes(kind, model.active)
        sizes[CLASS_ACTIVE] += int((classes == CLASS_ACTIVE).sum())
        sizes[CLASS_INACTIVE] += int((classes == CLASS_INACTIVE).sum())
    return sizes


def _param_table(segments: Sequence[DeviatingSegment]):
    """Group segments by parameter: keys, class, segment count, deviation sum, frame count."""
    index = {}
    for seg in segments:
        index.setdefault(seg.key, []).append(seg)
    keys = list(index)
    cls = np.array([index[k][0].param_class for k in keys], dtype=object)
    nseg = np.array([len(index[k]) for k in keys], dtype=float)
    dsum = np.array([sum(s.deviation_sum for s in index[k]) for k in keys], dtype=float)
    nfr = np.array([sum(s.n_frames for s in index[k]) for k in keys], dtype=float)
    return keys, cls, nseg, dsum, nfr


def _score(cls, nseg, dsum, nfr, sizes, weights: ScoreWeights, joint_grouping: bool):
    present = nseg > 0
    s = np.zeros(len(cls))
    s[present] = np.minimum(1.0, dsum[present] / nfr[present] / weights.d_cap)
    decayed = (cls == CLASS_ACTIVE) & present
    d = float(nseg[decayed].mean()) if decayed.any() else 0.0
    s = np.where(decayed, s * weights.alpha_decay ** d, s)

    def set_score(mask, size):
        if size == 0:
            return 1.0
        return 1.0 - min(1.0, float(s[mask & present].sum()) / size)

    sub_T = set_score(cls == CLASS_TIME, sizes[CLASS_TIME])
    sub_A = set_score(cls == CLASS_ACTIVE, sizes[CLASS_ACTIVE])
    sub_N = set_score(cls == CLASS_INACTIVE, sizes[CLASS_INACTIVE])
    if joint_grouping:
        a_A, a_N = weights.alpha_A, weights.alpha_N
    else:
        a_A = a_N = (weights.alpha_A + weights.alpha_N) / 2
    total = a_A * sub_A + a_N * sub_N + weights.alpha_T * sub_T
    return float(min(1.0, max(0.0, total))), {"A": sub_A, "N": sub_N, "T": sub_T}


def compute_score(segments: Sequence[DeviatingSegment], sizes: Dict[str, int],
                  weights: ScoreWeights = ScoreWeights(), joint_grouping: bool = True):
    """Final score and per-class subscores from the deviating segments."""
    _, cls, nseg, dsum, nfr = _param_table(segments)
    return _score(cls, nseg, dsum, nfr, sizes, weights, joint_grouping)


def segment_losses(segments: Sequence[DeviatingSegment], sizes: Dict[str, int],
                   weights: ScoreWeights = ScoreWeights(), joint_grouping: bool = True) -> np.ndarray:
    """Score gained back by removing each segment alone (exact marginal recomputation)."""
    keys, cls, nseg, dsum, nfr = _param_table(segments)
    base, _ = _score(cls, nseg, dsum, nfr, sizes, weights, joint_grouping)
    pos = {k: i for i, k in enumerate(keys)}
    losses = np.empty(len(segments))
    for n, seg in enumerate(segments):
        i = pos[seg.key]
        ns, ds, nf = nseg.copy(), dsum.copy(), nfr.copy()
        ns[i] -= 1
        ds[i] -= seg.deviation_sum
        nf[i] -= seg.n_frames
        if ns[i] == 0:
            ds[i] = nf[i] = 0.0
        removed, _ = _score(cls, ns, ds, nf, sizes, weights, joint_grouping)
        losses[n] = removed - base
    return losses


def describe_segment(model: TrainedModel, seg: DeviatingSegment) -> str:
    if seg.kind == "time":
        return describe_time(seg.series)
    return model.layout.describe(seg.kind, seg.series)


_DIRECTIONS = {"positive": "too high", "negative": "too low", "unstable": "unstable"}


def select_feedback(losses: Sequence[float], starts: Sequence[float]) -> List[int]:
    """Indices of feedback items in output order.

    Items are ranked by descending loss (earlier start first on ties). Output
    stops at a loss below half the previous one, or after five items.
    """
    order = sorted(range(len(losses)), key=lambda i: (-losses[i], starts[i], i))
    chosen = []
    for i in order:
        if losses[i] <= 0 or len(chosen) == MAX_FEEDBACK_ITEMS:
            break
        if chosen and losses[i] < 0.5 * losses[chosen[-1]]:
            break
        chosen.append(i)
    return chosen


def generate_feedback(model: TrainedModel, segments: Sequence[DeviatingSegment],
                      frame_times: Sequence[float], time_ranges: Sequence = None) -> List[FeedbackItem]:
    """Ranked textual feedback items.

    ``frame_times`` maps aligned frame indices to seconds in the input video;
    ``time_ranges[k]`` gives the (start, end) seconds for time parameter ``k``.
    """
    frame_times = np.asarray(frame_times, dtype=float)

    def span(seg):
        if seg.kind == "time":
            if time_ranges is not None:
                return time_ranges[seg.series]
            return float(frame_times[0]), float(frame_times[-1])
        # a velocity frame spans f -> f + 1
        last = min(seg.end + (1 if seg.kind == "vel" else 0), len(frame_times) - 1)
        return float(frame_times[seg.start]), float(frame_times[last])

    spans = [span(s) for s in segments]
    items = []
    for i in select_feedback([s.loss for s in segments], [sp[0] for sp in spans]):
        seg = segments[i]
        desc = describe_segment(model, seg)
        t0, t1 = spans[i]
        if seg.kind == "time" and seg.label == "unstable":
            direction = "unstable"
            text = f"{desc} could not be located"
        elif seg.kind == "time":
            direction = "too slow" if seg.label == "positive" else "too fast"
            text = f"{desc} performed {direction}"
        else:
            direction = _DIRECTIONS[seg.label]
            text = f"{desc} was {direction} between {t0:.2f}s and {t1:.2f}s"
        items.append(FeedbackItem(seg.key, desc, direction, t0, t1, seg.loss, text))
    return items


def assess_features(model: TrainedModel, features: FeatureSet, weights: ScoreWeights = ScoreWeights(),
                    *, segmentation: bool = True, joint_grouping: bool = True,
                    frame_times: Optional[Sequence[float]] = None,
                    time_ranges: Optional[Sequence] = None) -> AssessmentResult:
    """Score an aligned feature set against ``model`` and build feedback."""
    dev = compute_deviations(model, features, weights)
    segments = deviating_segments(model, dev, weights, segmentation=segmentation)
    sizes = class_sizes(model)
    score, subscores = compute_score(segments, sizes, weights, joint_grouping)
    losses = segment_losses(segments, sizes, weights, joint_grouping)
    segments = [replace(s, loss=float(l)) for s, l in zip(segments, losses)]
    if frame_times is None:
        frame_times = np.arange(model.reference_length) / model.fps
    feedback = generate_feedback(model, segments, frame_times, time_ranges)
    return AssessmentResult(score, subscores, segments, feedback)


def _f(x: float) -> str:
    return f"{x:.6f}"


def format_report(result: AssessmentResult, tabular: bool = False, score_only: bool = False,
                  feedback_only: bool = False) -> str:
    sep = "\t" if tabular else " "
    lines = []
    if not feedback_only:
        lines.append(sep.join(["score", _f(result.score)]))
        if not score_only:
            for c in ("A", "N", "T"):
                lines.append(sep.join(["subscore", c, _f(result.subscores[c])]))
            for seg in sorted(result.segments, key=lambda s: (-s.loss, s.key, s.start)):
                lines.append(sep.join(["segment", seg.key, str(seg.start), str(seg.end), seg.label,
                                       _f(seg.confidence), _f(seg.loss)]))
    if not score_only:
        for item in result.feedback:
            if tabular:
                lines.append(sep.join(["feedback", item.key, _f(item.start_time), _f(item.end_time),
                                       item.direction, _f(item.loss), item.text]))
            else:
                lines.append(f"feedback {item.text}")
    return "\n".join(lines) + "\n"
