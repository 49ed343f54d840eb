"""Time segmentation of frame-level deviations.

Each frame of a parameter's deviation series carries a label: no deviation,
positive or negative. A sequence classifier scores how clearly a range of
frames belongs to one deviation class, and a dynamic program picks the
segmentation with the highest average (length-rewarded) classification score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .weights import ScoreWeights

CLASSES = ("none", "positive", "negative", "unstable", "dummy")
NONE, POSITIVE, NEGATIVE, UNSTABLE, DUMMY = range(5)
# frame label codes
LABEL_NONE, LABEL_POS, LABEL_NEG = 0, 1, 2

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class Classification:
    label: str
    confidences: np.ndarray  # softmax over CLASSES
    scores: np.ndarray  # raw class scores before the softmax

    @property
    def confidence(self) -> float:
        """Confidence of the output class; zero when the dummy class won."""
        if self.winner == DUMMY:
            return 0.0
        return float(self.confidences[self.winner])

    @property
    def winner(self) -> int:
        return _winner(self.scores)


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # inclusive
    label: str
    confidence: float

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def frame_labels(thresholded: np.ndarray, signs: np.ndarray) -> np.ndarray:
    thresholded = np.asarray(thresholded)
    signs = np.asarray(signs)
    labels = np.full(thresholded.shape, LABEL_NONE, dtype=np.int8)
    labels[(thresholded > 0) & (signs > 0)] = LABEL_POS
    labels[(thresholded > 0) & (signs < 0)] = LABEL_NEG
    return labels


def _softmax(x: np.ndarray, axis=-1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def scattering_goodness(indices: np.ndarray, n: int) -> float:
    """1 - min(1, S) for the label indices of a range of ``n`` frames; 0 if empty."""
    if len(indices) == 0:
        return 0.0
    var_all = np.var(np.arange(n, dtype=float))
    if var_all == 0:
        return 1.0
    s = ((np.var(np.asarray(indices, dtype=float)) - var_all) / var_all) ** 2
    return 1.0 - min(1.0, s)


def classify_sequence(labels: Sequence[int], weights: ScoreWeights = ScoreWeights()) -> Classification:
    """Classify a range of labelled frames as none / positive / negative / unstable."""
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("cannot classify an empty range")
    idx = np.arange(n)
    rate = {}
    good = {}
    for code in (LABEL_NONE, LABEL_POS, LABEL_NEG):
        members = idx[labels == code]
        rate[code] = len(members) / n
        good[code] = scattering_goodness(members, n)
    scores = np.empty(5)
    scores[NONE] = weights.lam * rate[LABEL_NONE] * good[LABEL_NONE]
    scores[POSITIVE] = weights.lam * rate[LABEL_POS] * good[LABEL_POS]
    scores[NEGATIVE] = weights.lam * rate[LABEL_NEG] * good[LABEL_NEG]
    r_unstable = min(1.0, weights.rho_unstable * min(rate[LABEL_POS], rate[LABEL_NEG]))
    scores[UNSTABLE] = r_unstable * (good[LABEL_POS] + good[LABEL_NEG]) / 2
    scores[DUMMY] = min(1 - good[LABEL_POS], 1 - good[LABEL_NEG], 1 - good[LABEL_NONE])
    conf = _softmax(scores)
    result = Classification(CLASSES[0], conf, scores)
    winner = result.winner
    label = "none" if winner == DUMMY else CLASSES[winner]
    return Classification(label, conf, scores)


def length_reward(n, xi: float):
    return (1.0 + np.log(n)) ** xi


def sequence_score(labels: Sequence[int], weights: ScoreWeights = ScoreWeights()) -> float:
    """Winning-class confidence times the length reward (zero if the dummy class wins)."""
    c = classify_sequence(labels, weights)
    return c.confidence * float(length_reward(len(labels), weights.xi))


def _winner(scores: np.ndarray) -> int:
    """First class whose score is within the tie tolerance of the maximum."""
    top = float(np.max(scores))
    return int(np.flatnonzero(scores >= top - _TIE_TOL)[0])


def score_tables(labels: np.ndarray, weights: ScoreWeights = ScoreWeights()) -> np.ndarray:
    """Length-rewarded winner confidence of every range of every series in a batch.

    ``labels`` has shape ``(P, n)``. Returns ``cs`` of shape ``(P, n, n)``
    indexed ``[p, start, end]`` (inclusive end), ``-inf`` where ``start > end``.
    Only the winner's softmax probability is needed, which is
    ``1 / sum(exp(score - max score))``; it is zero when the dummy class wins.
    """
    labels = np.asarray(labels)
    P, n = labels.shape
    k = np.arange(n, dtype=float)
    a = np.arange(n)[:, None]
    b = np.arange(n)[None, :]
    valid = a <= b
    length = np.where(valid, b - a + 1, 1).astype(float)
    var_all = (length ** 2 - 1) / 12.0
    inv_var_all = np.where(var_all > 0, 1.0 / np.where(var_all > 0, var_all, 1.0), 0.0)

    rate = []
    good = []
    for code in (LABEL_NONE, LABEL_POS, LABEL_NEG):
        m = (labels == code).astype(float)
        c = np.concatenate([np.zeros((P, 1)), np.cumsum(m, axis=1)], axis=1)
        s1 = np.concatenate([np.zeros((P, 1)), np.cumsum(m * k, axis=1)], axis=1)
        s2 = np.concatenate([np.zeros((P, 1)), np.cumsum(m * k * k, axis=1)], axis=1)
        cnt = c[:, None, 1:] - c[:, :-1, None]
        t1 = s1[:, None, 1:] - s1[:, :-1, None]
        t2 = s2[:, None, 1:] - s2[:, :-1, None]
        present = cnt > 0
        safe = np.where(present, cnt, 1.0)
        # variance of the member indices, relative to the variance of the range
        g = (t2 / safe - (t1 / safe) ** 2 - var_all) * inv_var_all
        np.square(g, out=g)
        np.minimum(g, 1.0, out=g)
        np.subtract(1.0, g, out=g)
        g[~present] = 0.0
        rate.append(cnt / length)
        good.append(g)

    s_none = weights.lam * rate[0] * good[0]
    s_pos = weights.lam * rate[1] * good[1]
    s_neg = weights.lam * rate[2] * good[2]
    s_uns = np.minimum(1.0, weights.rho_unstable * np.minimum(rate[1], rate[2])) * (good[1] + good[2]) / 2
    s_dum = np.minimum(np.minimum(1 - good[1], 1 - good[2]), 1 - good[0])
    del rate, good
    top = np.maximum(np.maximum(s_none, s_pos), np.maximum(s_neg, s_uns))
    dummy_wins = s_dum > top + _TIE_TOL
    np.maximum(top, s_dum, out=top)
    z = np.zeros_like(top)
    for sc in (s_none, s_pos, s_neg, s_uns, s_dum):
        sc -= top
        np.exp(sc, out=sc)
        z += sc
    cs = length_reward(length, weights.xi) / z
    cs[dummy_wins] = 0.0
    cs[:, ~valid] = -np.inf
    return cs


def _penalized_dp(cs: np.ndarray, lam: np.ndarray):
    """Maximize sum(cs - lam) over segmentations; ties to fewer segments, then earlier cuts.

    Returns the back-pointer array of shape ``(P, n + 1)``: ``back[p, i]`` is
    the start of the last segment of the best segmentation of frames ``[0, i)``.
    """
    P, n, _ = cs.shape
    F = np.full((P, n + 1), -np.inf)
    K = np.zeros((P, n + 1))
    F[:, 0] = 0.0
    back = np.zeros((P, n + 1), dtype=int)
    rows = np.arange(P)
    for i in range(1, n + 1):
        cand = F[:, :i] + cs[:, :i, i - 1] - lam[:, None]
        best = cand.max(axis=1)
        tol = _TIE_TOL * np.maximum(1.0, np.abs(best))
        tied = cand >= (best - tol)[:, None]
        # fewest segments first, then the earliest start of the last segment
        rank = np.where(tied, K[:, :i] * (n + 1) + np.arange(i)[None, :], np.inf)
        j = np.argmin(rank, axis=1)
        back[:, i] = j
        F[:, i] = cand[rows, j]
        K[:, i] = K[rows, j] + 1
    return back


def _trace(back_row: np.ndarray, n: int) -> List[Tuple[int, int]]:
    bounds = []
    i = n
    while i > 0:
        j = int(back_row[i])
        bounds.append((j, i - 1))
        i = j
    bounds.reverse()
    return bounds


def segment_batch(labels: np.ndarray, weights: ScoreWeights = ScoreWeights(),
                  max_iter: int = 100) -> Tuple[List[List[Segment]], np.ndarray]:
    """Optimal segmentation of every label series in ``labels`` (shape ``(P, n)``).

    The objective (average of per-segment scores) is a ratio, so it is solved
    exactly by Dinkelbach iterations over an additive dynamic program: with
    the current best average ``lam``, find the segmentation maximizing
    ``sum(cs - lam)``; stop once that maximum is zero.
    Returns the segment lists and the objective values.
    """
    labels = np.atleast_2d(np.asarray(labels))
    P, n = labels.shape
    if n == 0:
        raise ValueError("cannot segment an empty series")
    cs = score_tables(labels, weights)
    lam = cs[:, 0, n - 1].copy()
    bounds: List[List[Tuple[int, int]]] = [[(0, n - 1)] for _ in range(P)]
    active = np.arange(P)
    for _ in range(max_iter):
        if len(active) == 0:
            break
        back = _penalized_dp(cs[active], lam[active])
        still = []
        for row, p in enumerate(active):
            seg = _trace(back[row], n)
            total = sum(cs[p, a, b] for a, b in seg)
            gain = total - lam[p] * len(seg)
            bounds[p] = seg
            if gain > _TIE_TOL * max(1.0, abs(total)):
                lam[p] = total / len(seg)
                still.append(p)
            else:
                lam[p] = total / len(seg)
        active = np.array(still, dtype=int)
    segments = []
    for p in range(P):
        segs = []
        for a, b in bounds[p]:
            c = classify_sequence(labels[p, a:b + 1], weights)
            segs.append(Segment(a, b, c.label, c.confidence))
        segments.append(segs)
    return segments, lam


def segment_labels(labels: Sequence[int], weights: ScoreWeights = ScoreWeights()) -> Tuple[List[Segment], float]:
    segs, obj = segment_batch(np.asarray(labels)[None, :], weights)
    return segs[0], float(obj[0])


def segmentation_objective(bounds: Sequence[Tuple[int, int]], labels: Sequence[int],
                           weights: ScoreWeights = ScoreWeights()) -> float:
    """Average length-rewarded classification score of a segmentation (inclusive bounds)."""
    labels = np.asarray(labels)
    return float(np.mean([sequence_score(labels[a:b + 1], weights) for a, b in bounds]))
