"""Dynamic time warping baseline."""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .skeleton import SkeletonVideo


def active_joint_features(joints: Optional[Sequence[int]] = None) -> Callable[[SkeletonVideo], np.ndarray]:
    """Per-frame vector of the chosen joints' positions followed by their velocities.

    The velocity of the last frame repeats the previous one.
    """

    def extract(video: SkeletonVideo) -> np.ndarray:
        sel = list(range(video.topology.n_joints)) if joints is None else list(joints)
        pos = video.frames[:, sel].reshape(video.n_frames, -1)
        if video.n_frames > 1:
            vel = np.diff(pos, axis=0)
            vel = np.vstack([vel, vel[-1:]])
        else:
            vel = np.zeros_like(pos)
        return np.hstack([pos, vel])

    return extract


def dtw_path(x: np.ndarray, y: np.ndarray) -> Tuple[float, List[Tuple[int, int]]]:
    """Minimal-cost monotone path between feature sequences ``x`` (source) and ``y`` (reference).

    Steps are (1,0), (0,1) and (1,1); the path cost is the sum of Euclidean
    frame distances along the path.
    """
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("DTW needs non-empty sequences")
    dist = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row = acc[i]
        prev = acc[i - 1]
        d = dist[i - 1]
        for j in range(1, m + 1):
            row[j] = d[j - 1] + min(prev[j - 1], prev[j], row[j - 1])
    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        # prefer the diagonal on ties, then the source step
        options = ((acc[i - 1, j - 1], i - 1, j - 1),
                   (acc[i - 1, j], i - 1, j),
                   (acc[i, j - 1], i, j - 1))
        _, i, j = min(options, key=lambda o: o[0])
        path.append((i - 1, j - 1))
    path.reverse()
    return float(acc[n, m]), path


def dtw_align(video: SkeletonVideo, reference: SkeletonVideo,
              feature: Optional[Callable[[SkeletonVideo], np.ndarray]] = None) -> SkeletonVideo:
    """Resample ``video`` onto the reference timeline by DTW frame matching.

    Output frame ``t`` is the last source frame matched to reference frame ``t``.
    """
    feature = feature or active_joint_features()
    _, path = dtw_path(feature(video), feature(reference))
    match = np.zeros(reference.n_frames, dtype=int)
    for i, j in path:
        match[j] = i
    return video.with_frames(video.frames[match])
