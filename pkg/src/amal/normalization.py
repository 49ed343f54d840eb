"""Skeleton dimension normalization and body-plane alignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Hashable, List, Sequence, Tuple

import numpy as np

from .skeleton import SkeletonVideo, edge_lengths


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class DesignatedSkeleton:
    """Canonical edge lengths that every video is rescaled to."""

    edge_lengths: Dict[Tuple[int, int], float]
    root_joint: int

    def __post_init__(self):
        bad = [e for e, v in self.edge_lengths.items() if not v > 0]
        if bad:
            raise NormalizationError(f"non-positive designated length for edges {bad}")

    def length(self, p: int, q: int) -> float:
        if (p, q) in self.edge_lengths:
            return self.edge_lengths[(p, q)]
        return self.edge_lengths[(q, p)]


def compute_designated_skeleton(videos: Sequence[SkeletonVideo],
                                person_ids: Sequence[Hashable] = None) -> DesignatedSkeleton:
    """Two-stage mean of edge lengths: over each person's frames, then over people.

    ``person_ids`` defaults to one person per video.
    """
    if not videos:
        raise NormalizationError("no videos to compute a designated skeleton from")
    if person_ids is None:
        person_ids = list(range(len(videos)))
    if len(person_ids) != len(videos):
        raise NormalizationError("person_ids must align with videos")
    topo = videos[0].topology
    for v in videos[1:]:
        if v.topology != topo:
            raise NormalizationError("videos do not share one topology")

    per_person: Dict[Hashable, List[np.ndarray]] = {}
    for pid, v in zip(person_ids, videos):
        per_person.setdefault(pid, []).append(edge_lengths(v))
    person_means = []
    for pid in sorted(per_person, key=repr):
        mean = np.concatenate(per_person[pid]).mean(axis=0)
        if np.any(mean <= 0):
            zero = [topo.edges[k] for k in np.flatnonzero(mean <= 0)]
            raise NormalizationError(f"person {pid!r}: zero-length edges {zero}")
        person_means.append(mean)
    designated = np.mean(person_means, axis=0)
    return DesignatedSkeleton(
        {e: float(l) for e, l in zip(topo.edges, designated)},
        root_joint=topo.spine_base,
    )


def normalize_dimensions(video: SkeletonVideo, designated: DesignatedSkeleton) -> SkeletonVideo:
    """Rescale every frame so that BFS-tree edges match the designated lengths.

    The root keeps its position; each child is placed along the original
    parent-to-child direction at the designated distance from its parent's new
    position.
    """
    topo = video.topology
    order = topo.bfs_edges(designated.root_joint)
    if len(order) != topo.n_joints - 1:
        raise NormalizationError("topology not connected")
    old = video.frames
    new = np.empty_like(old)
    new[:, designated.root_joint] = old[:, designated.root_joint]
    for p, q in order:
        vec = old[:, q] - old[:, p]
        norm = np.linalg.norm(vec, axis=1)
        if np.any(norm == 0):
            f = int(np.flatnonzero(norm == 0)[0])
            raise NormalizationError(
                f"frame {f}: zero-length edge {topo.joint_names[p]}-{topo.joint_names[q]}")
        new[:, q] = new[:, p] + vec * (designated.length(p, q) / norm)[:, None]
    return video.with_frames(new)


def body_plane_rotations(video: SkeletonVideo) -> np.ndarray:
    """Per-frame 3x3 matrices with rows X, Y, Z of the body-plane basis."""
    a_idx, b_idx, c_idx = video.topology.reference_joints
    A = video.frames[:, a_idx]
    B = video.frames[:, b_idx]
    C = video.frames[:, c_idx]
    D = 0.5 * (B + C)
    AD = D - A
    z = np.cross(C - A, B - A)
    ad_norm = np.linalg.norm(AD, axis=1)
    z_norm = np.linalg.norm(z, axis=1)
    scale = np.maximum(np.linalg.norm(C - A, axis=1) * np.linalg.norm(B - A, axis=1), 1e-300)
    degenerate = (ad_norm <= 1e-12) | (z_norm <= 1e-12 * scale) | (z_norm == 0)
    if np.any(degenerate):
        f = int(np.flatnonzero(degenerate)[0])
        raise NormalizationError(f"frame {f}: reference joints are collinear or coincident")
    y = AD / ad_norm[:, None]
    z = z / z_norm[:, None]
    x = np.cross(y, z)
    x /= np.linalg.norm(x, axis=1)[:, None]
    return np.stack([x, y, z], axis=1)


def align_to_body_plane(video: SkeletonVideo) -> SkeletonVideo:
    """Express each frame in its body-plane coordinate system with SpineBase at the origin."""
    rot = body_plane_rotations(video)
    projected = np.einsum("fij,fkj->fki", rot, video.frames)
    projected -= projected[:, video.topology.spine_base][:, None, :]
    return video.with_frames(projected)


def normalize_video(video: SkeletonVideo, designated: DesignatedSkeleton) -> SkeletonVideo:
    return align_to_body_plane(normalize_dimensions(video, designated))
