"""End-to-end training and assessment."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .alignment import (ActiveJointSet, AlignmentConfig, AlignmentError, PoISet,
                        RestDetectionError, detect_active_joints, detect_rest_sequences,
                        interpolate_frames, match_partial_rests, place_missing_rests,
                        reconcile_rest_counts,
                        select_reference_video, select_rest_subset, warp_source_indices)
from .assessment import AssessmentError, AssessmentResult, assess_features
from .dtw import active_joint_features, dtw_path
from .features import ParameterLayout, extract_frame_features, time_parameters
from .model import TrainedModel, fit_model
from .normalization import compute_designated_skeleton, normalize_video
from .skeleton import SkeletonVideo
from .weights import ScoreWeights

log = logging.getLogger(__name__)


@dataclass
class TrainingReport:
    active: ActiveJointSet
    rest_counts: List[int]
    designated_rests: int
    reference_index: int
    pois: List[PoISet]


@dataclass
class AlignedVideo:
    """A normalized video on the model timeline, with bookkeeping for feedback."""

    video: SkeletonVideo
    source_index: np.ndarray  # fractional source frame per aligned frame
    pois: PoISet
    time_values: np.ndarray
    fallback: bool = False


def _dtw_indices(video: SkeletonVideo, reference: SkeletonVideo, joints) -> np.ndarray:
    feat = active_joint_features(sorted(joints))
    _, path = dtw_path(feat(video), feat(reference))
    match = np.zeros(reference.n_frames)
    for i, j in path:
        match[j] = i
    return match


def _uniform_indices(n: int, length: int) -> np.ndarray:
    if length == 1:
        return np.zeros(1)
    return np.arange(length) * ((n - 1) / (length - 1))


def train(videos: Sequence[SkeletonVideo], person_ids: Optional[Sequence[Hashable]] = None,
          cfg: AlignmentConfig = None, warp: str = "poi") -> Tuple[TrainedModel, TrainingReport]:
    """Normalize, align and fit a model on properly performed videos."""
    cfg = cfg or AlignmentConfig()
    if len(videos) < 3:
        raise ValueError(f"need >= 3 training videos, got {len(videos)}")
    designated = compute_designated_skeleton(videos, person_ids)
    normed = [normalize_video(v, designated) for v in videos]
    active = detect_active_joints(normed, cfg)
    if not active.active:
        raise RestDetectionError("no active joints detected in the training videos")
    rests = [detect_rest_sequences(v, active, cfg) for v in normed]
    pois = reconcile_rest_counts(rests, normed, active, cfg)
    lengths = [v.n_frames for v in normed]
    ref = select_reference_video(pois, lengths)
    ref_len = lengths[ref]
    layout = ParameterLayout(videos[0].topology)
    feats = []
    for v, p in zip(normed, pois):
        if warp == "poi":
            idx = warp_source_indices(p, v.n_frames, pois[ref], ref_len)
        elif warp == "dtw":
            idx = _dtw_indices(v, normed[ref], active.active)
        elif warp == "none":
            idx = _uniform_indices(v.n_frames, ref_len)
        else:
            raise ValueError(f"unknown warp method {warp!r}")
        aligned = v.with_frames(interpolate_frames(v.frames, idx))
        feats.append(extract_frame_features(aligned, layout, time_parameters(v.n_frames, p)))
    model = fit_model(feats, topology=videos[0].topology, designated=designated,
                      active=active.active, reference_pois=pois[ref], reference_length=ref_len,
                      fps=videos[ref].fps, warp=warp)
    log.info("active joints: %s", ", ".join(videos[0].topology.joint_names[j] for j in active.sorted))
    log.info("designated rest count: %d; reference video: %d", pois[ref].n_rests, ref)
    report = TrainingReport(active, [len(r) for r in rests], pois[ref].n_rests, ref, pois)
    return model, report


def locate_pois(model: TrainedModel, video: SkeletonVideo, cfg: AlignmentConfig = None,
                strict: bool = False) -> Tuple[PoISet, np.ndarray]:
    """Detect the model's rests in a normalized video.

    Returns the PoIs and a mask of those that were placed rather than
    detected. When fewer rests than the model's are found (and not
    ``strict``), the found ones are matched in order to the model's rests (by
    timing and by the pose held). Each missing rest becomes a two-frame rest
    at the frame, between its found neighbours, nearest the pose the model
    holds there.
    """
    cfg = cfg or AlignmentConfig()
    k = model.n_rests
    n = video.n_frames
    target = model.reference_pois.normalized(model.reference_length)
    rests = detect_rest_sequences(video, ActiveJointSet(model.active), cfg,
                                  required_count=k, partial=not strict)
    if len(rests) >= k:
        if len(rests) > k:
            rests = select_rest_subset(rests, n, target)
        return PoISet.from_rests(rests), np.zeros(2 * k, dtype=bool)
    log.warning("found %d of %d rests; placing the missing PoIs", len(rests), k)
    joints = sorted(model.active)
    mean_frames = model.mean_video_frames()
    ref_rests = np.reshape(model.reference_pois.indices, (k, 2))
    slot_poses = [mean_frames[a:b + 1, joints].mean(axis=0) for a, b in ref_rests]
    rest_poses = [video.frames[r.start_frame:r.end_frame + 1, joints].mean(axis=0) for r in rests]
    slots = match_partial_rests(rests, n, target, np.array(rest_poses), np.array(slot_poses))
    placed = np.repeat([r is None for r in slots], 2)
    slots = place_missing_rests(slots, video.frames[:, joints], np.array(slot_poses))
    # anything still unplaced follows the piecewise-linear map through the rest
    known = np.repeat([r is not None for r in slots], 2)
    own = np.array([i for r in slots if r is not None for i in (r.start_frame, r.end_frame)], dtype=float)
    ref = np.asarray(model.reference_pois.indices, dtype=float)
    xp = np.concatenate([[0.0], ref[known], [model.reference_length - 1.0]])
    fp = np.concatenate([[0.0], own, [n - 1.0]])
    idx = np.round(np.interp(ref, xp, fp)).astype(int)
    idx[known] = own.astype(int)
    if len(idx) > n:
        raise AssessmentError("video too short to place the model's PoIs")
    for i in range(1, len(idx)):
        idx[i] = max(idx[i], idx[i - 1] + 1)
    idx[-1] = min(idx[-1], n - 1)
    for i in range(len(idx) - 2, -1, -1):
        idx[i] = min(idx[i], idx[i + 1] - 1)
    return PoISet(tuple(int(i) for i in idx)), placed


def align_for_model(model: TrainedModel, video: SkeletonVideo, cfg: AlignmentConfig = None,
                    strict: bool = False) -> AlignedVideo:
    """Normalize ``video`` with the model's skeleton and bring it onto the model timeline.

    Stretches between PoIs that had to be placed (see ``locate_pois``) get
    NaN time values: they were not measured.
    """
    if video.topology != model.topology:
        raise AssessmentError("video topology does not match the model")
    normed = normalize_video(video, model.designated)
    pois, placed = locate_pois(model, normed, cfg, strict=strict)
    if model.warp == "poi":
        idx = warp_source_indices(pois, normed.n_frames, model.reference_pois, model.reference_length)
    elif model.warp == "dtw":
        mean_video = normed.with_frames(model.mean_video_frames())
        idx = _dtw_indices(normed, mean_video, model.active)
    else:
        idx = _uniform_indices(normed.n_frames, model.reference_length)
    aligned = normed.with_frames(interpolate_frames(normed.frames, idx))
    times = np.asarray(time_parameters(normed.n_frames, pois), dtype=float)
    # PoI q bounds stretches q and q + 1, stored after the total length
    for q in np.flatnonzero(placed):
        times[q + 1:q + 3] = np.nan
    return AlignedVideo(aligned, idx, pois, times, bool(placed.any()))


def align_pair(video: SkeletonVideo, reference: SkeletonVideo, cfg: AlignmentConfig = None,
               method: str = "poi") -> Tuple[SkeletonVideo, Optional[Tuple[PoISet, PoISet]]]:
    """Normalize both videos with their common skeleton and warp ``video`` onto ``reference``.

    Returns the warped video and the (video, reference) PoIs. With
    ``method="dtw"`` the PoIs are only a diagnostic and are ``None`` when the
    rests cannot be reconciled.
    """
    cfg = cfg or AlignmentConfig()
    if video.topology != reference.topology:
        raise AlignmentError("videos have different topologies")
    designated = compute_designated_skeleton([video, reference], [0, 1])
    normed = [normalize_video(v, designated) for v in (video, reference)]
    active = detect_active_joints(normed, cfg)
    try:
        if not active.active:
            raise RestDetectionError("no active joints detected")
        rests = [detect_rest_sequences(v, active, cfg) for v in normed]
        pois = reconcile_rest_counts(rests, normed, active, cfg)
    except AlignmentError:
        if method == "poi":
            raise
        pois = None
    n_ref = normed[1].n_frames
    if method == "poi":
        idx = warp_source_indices(pois[0], normed[0].n_frames, pois[1], n_ref)
    elif method == "dtw":
        idx = _dtw_indices(normed[0], normed[1], active.active or range(video.topology.n_joints))
    else:
        raise ValueError(f"unknown warp method {method!r}")
    warped = normed[0].with_frames(interpolate_frames(normed[0].frames, idx))
    return warped, (tuple(pois) if pois is not None else None)


def assess(model: TrainedModel, video: SkeletonVideo, cfg: AlignmentConfig = None,
           weights: ScoreWeights = ScoreWeights(), *, segmentation: bool = True,
           joint_grouping: bool = True, strict: bool = False) -> AssessmentResult:
    aligned = align_for_model(model, video, cfg, strict=strict)
    feats = extract_frame_features(aligned.video, model.layout, aligned.time_values)
    aug = aligned.pois.augmented(video.n_frames)
    time_ranges = [(0.0, (video.n_frames - 1) / video.fps)]
    time_ranges += [(a / video.fps, b / video.fps) for a, b in zip(aug, aug[1:])]
    result = assess_features(model, feats, weights, segmentation=segmentation,
                             joint_grouping=joint_grouping,
                             frame_times=aligned.source_index / video.fps,
                             time_ranges=time_ranges)
    result.warp_fallback = aligned.fallback
    return result
