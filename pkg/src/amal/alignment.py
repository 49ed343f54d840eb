"""Temporal alignment of skeleton videos through mutual rest-sequence boundaries.

Rest sequences are runs of frames where the active joints are (nearly) still.
Their start and end frames act as points of interest (PoIs); warping stretches
each stretch between adjacent PoIs so that all videos share one timeline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .signal import gaussian_smooth, median_filter
from .skeleton import SkeletonVideo

log = logging.getLogger(__name__)

VELOCITY_FLOOR = 1e-6


class AlignmentError(ValueError):
    pass


class RestDetectionError(AlignmentError):
    pass


@dataclass(frozen=True)
class AlignmentConfig:
    p_joint: float = 0.8
    eta: float = -1.5
    p_rest: float = 0.3
    rho_gap: float = 0.075
    eta_decay: float = 0.9
    median_window: int = 5
    pyramid_levels: int = 2

    def __post_init__(self):
        for name in ("p_joint", "p_rest", "rho_gap"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if not self.eta < -1:
            raise ValueError(f"eta must be < -1, got {self.eta}")
        if not 0 < self.eta_decay < 1:
            raise ValueError(f"eta_decay must be in (0, 1), got {self.eta_decay}")
        if self.median_window < 3 or self.median_window % 2 == 0:
            raise ValueError(f"median_window must be odd and >= 3, got {self.median_window}")
        if self.pyramid_levels < 0:
            raise ValueError("pyramid_levels must be >= 0")


@dataclass(frozen=True)
class ActiveJointSet:
    active: FrozenSet[int]
    per_video_votes: Tuple[FrozenSet[int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "active", frozenset(int(j) for j in self.active))
        object.__setattr__(
            self, "per_video_votes", tuple(frozenset(v) for v in self.per_video_votes))

    @property
    def sorted(self) -> List[int]:
        return sorted(self.active)


@dataclass(frozen=True, order=True)
class RestSequence:
    start_frame: int
    end_frame: int


@dataclass(frozen=True)
class PoISet:
    indices: Tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise AlignmentError(f"PoI indices must be strictly increasing: {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_rests(cls, rests: Sequence[RestSequence]) -> "PoISet":
        return cls(tuple(i for r in rests for i in (r.start_frame, r.end_frame)))

    @property
    def n_rests(self) -> int:
        return len(self.indices) // 2

    def __len__(self):
        return len(self.indices)

    def normalized(self, length: int) -> np.ndarray:
        return np.asarray(self.indices, dtype=float) / length

    def augmented(self, length: int) -> List[int]:
        """PoIs with virtual boundaries at frame 0 and the last frame."""
        return [0, *self.indices, length - 1]

    def segment_lengths(self, length: int) -> List[int]:
        aug = self.augmented(length)
        return [b - a for a, b in zip(aug, aug[1:])]

    def to_text(self) -> str:
        return "pois " + " ".join(str(i) for i in self.indices)


def compute_velocity_magnitudes(video: SkeletonVideo, joint: int) -> np.ndarray:
    if video.n_frames < 2:
        raise AlignmentError("velocity needs at least 2 frames")
    return np.linalg.norm(np.diff(video.frames[:, joint], axis=0), axis=1)


def joint_location_variances(video: SkeletonVideo) -> np.ndarray:
    """Sample variance of each joint's 3D location (summed squared norms over |F| - 1)."""
    if video.n_frames < 2:
        raise AlignmentError("joint variance needs at least 2 frames")
    x = video.frames
    dev = x - x.mean(axis=0)
    return (dev ** 2).sum(axis=(0, 2)) / (len(x) - 1)


def detect_active_joints(videos: Sequence[SkeletonVideo], cfg: AlignmentConfig = None) -> ActiveJointSet:
    cfg = cfg or AlignmentConfig()
    if not videos:
        raise AlignmentError("no videos")
    votes = []
    for v in videos:
        var = joint_location_variances(v)
        votes.append(frozenset(np.flatnonzero(var > var.mean()).tolist()))
    n_joints = videos[0].topology.n_joints
    need = cfg.p_joint * len(videos) - 1e-9
    active = {j for j in range(n_joints) if sum(j in vs for vs in votes) >= need}
    return ActiveJointSet(frozenset(active), tuple(votes))


def _line_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Extend ``x`` by ``pad`` frames at each end along least-squares lines fitted to its ends."""
    n = len(x)
    m = min(n, pad + 1)

    def extend(end: np.ndarray, steps: np.ndarray) -> np.ndarray:
        t = np.arange(m, dtype=float) - (m - 1) / 2
        mean = end.mean(axis=0)
        denom = (t ** 2).sum()
        slope = np.tensordot(t, end - mean, axes=1) / denom if denom > 0 else np.zeros_like(mean)
        return mean + np.multiply.outer(steps, slope)

    t_last = (m - 1) / 2
    head = extend(x[:m], -t_last - np.arange(pad, 0, -1, dtype=float))
    tail = extend(x[n - m:], t_last + np.arange(1, pad + 1, dtype=float))
    return np.concatenate([head, x, tail])


def velocity_rest_votes(vel: np.ndarray, cfg: AlignmentConfig, eta: float, pad: int = 0) -> np.ndarray:
    """Fraction of joints calling each velocity frame a rest, from raw speeds of shape (F - 1, J).

    Speeds are median filtered, stripped of ``pad`` frames at each end,
    floored at ``VELOCITY_FLOOR`` and flipped by ``eta``; a frame is a rest for
    a joint when its flipped value is strictly above that joint's mean.
    """
    vel = median_filter(np.asarray(vel, dtype=float).reshape(len(vel), -1), cfg.median_window, axis=0)
    vel = vel[pad:len(vel) - pad]
    flipped = np.maximum(vel, VELOCITY_FLOOR) ** eta
    # strictly above the mean, beyond rounding noise
    is_rest = flipped > flipped.mean(axis=0) * (1 + 1e-9)
    return is_rest.mean(axis=1)


def _rest_frame_votes(video: SkeletonVideo, joints: Sequence[int], cfg: AlignmentConfig,
                      eta: float) -> np.ndarray:
    """Fraction of ``joints`` that consider each velocity frame a rest frame."""
    pos = video.frames[:, list(joints)]
    # continue the end trends so steady motion stays steady up to the edges
    pad = cfg.median_window + 2 * cfg.pyramid_levels + 1
    pos = _line_pad(pos, pad)
    pos = median_filter(pos, cfg.median_window, axis=0)
    pos = gaussian_smooth(pos, cfg.pyramid_levels, axis=0)
    vel = np.linalg.norm(np.diff(pos, axis=0), axis=2)
    return velocity_rest_votes(vel, cfg, eta, pad)


def rests_from_votes(votes: np.ndarray, cfg: AlignmentConfig, n_frames: int) -> List[RestSequence]:
    frames = np.flatnonzero(np.asarray(votes) >= cfg.p_rest - 1e-12)
    return _group_rest_frames(frames, cfg.rho_gap * n_frames)


def _group_rest_frames(frames: np.ndarray, max_gap: float) -> List[RestSequence]:
    """Group rest velocity frames into sequences of position frames.

    Velocity frame ``f`` spans positions ``f`` and ``f + 1``, so a run of still
    velocity frames ``s..e`` is a rest over frames ``s..e + 1``.
    """
    rests = []
    if len(frames) == 0:
        return rests
    start = prev = int(frames[0])
    for f in frames[1:]:
        f = int(f)
        if f - prev > max(max_gap, 1):
            rests.append(RestSequence(start, prev + 1))
            start = f
        prev = f
    rests.append(RestSequence(start, prev + 1))
    return rests


def detect_rest_sequences(video: SkeletonVideo, active: ActiveJointSet, cfg: AlignmentConfig = None,
                          required_count: Optional[int] = None,
                          partial: bool = False) -> List[RestSequence]:
    """Find rest sequences of the active joints.

    With ``required_count``, detection is repeated with ``eta`` multiplied by
    ``eta_decay`` until at least that many rests are found. If that never
    happens it is an error, unless ``partial`` is set: then the largest set
    found is returned.
    """
    cfg = cfg or AlignmentConfig()
    if not active.active:
        raise RestDetectionError("no active joints")
    if video.n_frames < 2:
        raise RestDetectionError("rest detection needs at least 2 frames")
    joints = active.sorted
    eta = cfg.eta
    most: List[RestSequence] = []
    while True:
        rests = rests_from_votes(_rest_frame_votes(video, joints, cfg, eta), cfg, video.n_frames)
        if required_count is None or len(rests) >= required_count:
            return rests
        if len(rests) > len(most):
            most = rests
        eta *= cfg.eta_decay
        if eta >= -1:
            if partial:
                return most
            raise RestDetectionError(
                f"found {len(rests)} rest sequences, need {required_count}; eta retries exhausted")
        log.debug("retrying rest detection with eta=%.4f", eta)


def _ordered_subset(cand: np.ndarray, target: np.ndarray) -> List[int]:
    """Indices of ``len(target)`` rows of ``cand``, in order, nearest to ``target`` row by row.

    Exact minimization of the summed squared distance by dynamic programming.
    """
    k, m = len(target), len(cand)
    if k == 0:
        return []
    cost = ((cand[None, :, :] - target[:, None, :]) ** 2).sum(axis=2)  # (k, m)
    best = np.full((k, m), np.inf)
    back = np.full((k, m), -1, dtype=int)
    best[0] = cost[0]
    for j in range(1, k):
        run_min, run_arg = np.inf, -1
        for i in range(j, m):
            if best[j - 1, i - 1] < run_min:
                run_min, run_arg = best[j - 1, i - 1], i - 1
            best[j, i] = run_min + cost[j, i]
            back[j, i] = run_arg
    i = int(np.argmin(best[k - 1]))
    chosen = [i]
    for j in range(k - 1, 0, -1):
        i = back[j, i]
        chosen.append(i)
    return chosen[::-1]


def _rest_matrix(rests: Sequence[RestSequence], length: int) -> np.ndarray:
    return np.array([[r.start_frame, r.end_frame] for r in rests], dtype=float).reshape(-1, 2) / length


def select_rest_subset(rests: Sequence[RestSequence], length: int, target: np.ndarray) -> List[RestSequence]:
    """Choose ``len(target) // 2`` rests, in order, closest to the normalized ``target`` boundaries."""
    k = len(target) // 2
    m = len(rests)
    if k > m:
        raise AlignmentError(f"cannot pick {k} rests out of {m}")
    if k == m:
        return list(rests)
    tgt = np.asarray(target, dtype=float).reshape(k, 2)
    return [rests[i] for i in _ordered_subset(_rest_matrix(rests, length), tgt)]


def match_partial_rests(rests: Sequence[RestSequence], length: int, target: np.ndarray,
                        rest_poses: Optional[np.ndarray] = None,
                        slot_poses: Optional[np.ndarray] = None) -> List[Optional[RestSequence]]:
    """Assign fewer rests than expected to the ``len(target) // 2`` expected slots.

    Each detected rest goes to one slot, in order, so that the summed squared
    distance to the normalized ``target`` boundaries is minimal. Given
    ``rest_poses`` and ``slot_poses`` (one row per rest / slot, e.g. mean joint
    positions in meters), the pose distance is added to that cost, so a rest
    is recognized by what the body does in it as well as by when it happens.
    Slots left without a rest are ``None``.
    """
    k = len(target) // 2
    if len(rests) > k:
        raise AlignmentError(f"{len(rests)} rests for {k} slots")
    tgt = np.asarray(target, dtype=float).reshape(k, 2)
    found = _rest_matrix(rests, length)
    if rest_poses is not None and slot_poses is not None:
        tgt = np.hstack([tgt, np.asarray(slot_poses, dtype=float).reshape(k, -1)])
        found = np.hstack([found, np.asarray(rest_poses, dtype=float).reshape(len(rests), -1)])
    slots = _ordered_subset(tgt, found)
    out: List[Optional[RestSequence]] = [None] * k
    for r, slot in zip(rests, slots):
        out[slot] = r
    return out


def place_missing_rests(slots: Sequence[Optional[RestSequence]], frame_poses: np.ndarray,
                        slot_poses: np.ndarray) -> List[Optional[RestSequence]]:
    """Fill empty slots with two-frame rests where the body is closest to the slot's pose.

    A rest that was not detected was passed through without holding still,
    so it is placed at the frame (between the neighbouring found rests, in
    time order) whose pose is nearest the pose expected in that rest. Slots
    whose gap is too short to hold them stay ``None``. Placed rests of
    adjacent slots may share a frame; callers separate them.
    """
    out = list(slots)
    n = len(frame_poses)
    poses = np.asarray(frame_poses, dtype=float).reshape(n, -1)
    targets = np.asarray(slot_poses, dtype=float).reshape(len(out), -1)
    q = 0
    while q < len(out):
        if out[q] is not None:
            q += 1
            continue
        q1 = q
        while q1 + 1 < len(out) and out[q1 + 1] is None:
            q1 += 1
        lo = out[q - 1].end_frame + 1 if q > 0 else 0
        hi = out[q1 + 1].start_frame - 1 if q1 + 1 < len(out) else n - 1
        frames = np.arange(lo, hi)  # a rest starting at f also covers f + 1
        if len(frames) >= q1 - q + 1:
            for slot, row in zip(range(q, q1 + 1), _ordered_subset(poses[frames], targets[q:q1 + 1])):
                out[slot] = RestSequence(int(frames[row]), int(frames[row]) + 1)
        q = q1 + 1
    return out


def median_count(values: Sequence[int]) -> int:
    """Median of rest counts, rounded down when it falls between two counts."""
    ordered = sorted(values)
    n = len(ordered)
    return (ordered[(n - 1) // 2] + ordered[n // 2]) // 2


def _longest_rests(rests: Sequence[RestSequence], k: int) -> List[RestSequence]:
    """The ``k`` longest rests in time order (earlier rest first on equal lengths)."""
    order = sorted(range(len(rests)), key=lambda i: (-(rests[i].end_frame - rests[i].start_frame), i))
    return [rests[i] for i in sorted(order[:k])]


def reconcile_rest_counts(per_video_rests: Sequence[Sequence[RestSequence]],
                          videos: Sequence[SkeletonVideo], active: ActiveJointSet,
                          cfg: AlignmentConfig = None) -> List[PoISet]:
    """Bring every video to the median rest count and return their PoI sets.

    Videos with too few rests re-run detection with a decayed ``eta``. Videos
    with too many keep the rests closest to the mean normalized PoIs of the
    videos that have exactly the median count (if there are none, of the
    longest rests of each video).
    """
    cfg = cfg or AlignmentConfig()
    k = median_count([len(r) for r in per_video_rests])
    rests = [list(r) for r in per_video_rests]
    for i, video in enumerate(videos):
        if len(rests[i]) < k:
            rests[i] = detect_rest_sequences(video, active, cfg, required_count=k)
    at_k = [i for i, r in enumerate(rests) if len(r) == k]
    if k == 0:
        target = np.zeros(0)
    elif at_k:
        target = np.mean([PoISet.from_rests(rests[i]).normalized(videos[i].n_frames)
                          for i in at_k], axis=0)
    else:
        target = np.mean([PoISet.from_rests(_longest_rests(r, k)).normalized(v.n_frames)
                          for r, v in zip(rests, videos)], axis=0)
    out = []
    for r, video in zip(rests, videos):
        if len(r) > k:
            r = select_rest_subset(r, video.n_frames, target)
        out.append(PoISet.from_rests(r))
    return out


def select_reference_video(poi_sets: Sequence[PoISet], video_lengths: Sequence[int]) -> int:
    """Index of the video whose normalized PoI vector is nearest to the centroid."""
    if not poi_sets:
        raise AlignmentError("no videos to choose a reference from")
    vecs = np.array([p.normalized(n) for p, n in zip(poi_sets, video_lengths)])
    dist = np.linalg.norm(vecs - vecs.mean(axis=0), axis=1)
    best = dist.min()
    return int(np.flatnonzero(dist <= best + 1e-12)[0])


def warp_source_indices(own_pois: PoISet, own_length: int, ref_pois: PoISet,
                        ref_length: int) -> np.ndarray:
    """Fractional source frame index for each output frame of the reference timeline."""
    if len(own_pois) != len(ref_pois):
        raise AlignmentError("PoI sets differ in length")
    if own_length < 1 or ref_length < 1:
        raise AlignmentError("cannot warp an empty video")
    src = own_pois.augmented(own_length)
    dst = ref_pois.augmented(ref_length)
    t = np.arange(ref_length, dtype=float)
    out = np.empty(ref_length)
    for a in range(len(dst) - 1):
        d0, d1 = dst[a], dst[a + 1]
        s0, s1 = src[a], src[a + 1]
        if d1 == d0:
            out[d0] = s0
            continue
        sel = slice(d0, d1 + 1)
        out[sel] = s0 + (t[sel] - d0) * ((s1 - s0) / (d1 - d0))
        out[d1] = s1
    return out


def interpolate_frames(frames: np.ndarray, idx: np.ndarray) -> np.ndarray:
    lo = np.floor(idx).astype(int)
    lo = np.clip(lo, 0, len(frames) - 1)
    hi = np.minimum(lo + 1, len(frames) - 1)
    w = (idx - lo)[:, None, None]
    return frames[lo] * (1 - w) + frames[hi] * w


def warp_to_reference(video: SkeletonVideo, own_pois: PoISet, ref_pois: PoISet,
                      ref_length: int) -> SkeletonVideo:
    """Piecewise-linear time warp so ``own_pois`` land exactly on ``ref_pois``."""
    idx = warp_source_indices(own_pois, video.n_frames, ref_pois, ref_length)
    return video.with_frames(interpolate_frames(video.frames, idx))


def resample_uniform(video: SkeletonVideo, length: int) -> SkeletonVideo:
    """Global linear time scaling to ``length`` frames (no PoI anchoring)."""
    if video.n_frames < 1 or length < 1:
        raise AlignmentError("cannot resample an empty video")
    if length == 1:
        idx = np.zeros(1)
    else:
        idx = np.arange(length) * ((video.n_frames - 1) / (length - 1))
    return video.with_frames(interpolate_frames(video.frames, idx))
