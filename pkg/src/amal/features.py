"""Scalar parameters observed on aligned, normalized videos.

Every per-frame quantity is split into scalar *series* (one value per frame):

========  ===========================================  ===============
kind      series                                       frames
========  ===========================================  ===============
``pos``   joint x/y/z location                          all
``vel``   joint x/y/z velocity (frame f+1 minus f)      all but last
``dist``  distance of every unordered joint pair        all
``ang``   angle between two edges sharing a joint       all
========  ===========================================  ===============

Time parameters (``time:total`` and ``time:seg:<k>``) are single values: the
original length of the video and of every stretch between adjacent PoIs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np

from .skeleton import SkeletonTopology, SkeletonVideo

FRAME_KINDS = ("pos", "vel", "dist", "ang")
AXES = "xyz"
CLASS_ACTIVE, CLASS_INACTIVE, CLASS_TIME = "A", "N", "T"


@dataclass(frozen=True)
class ParameterId:
    """One scalar observable. ``frame`` is None for time parameters and for whole series."""

    kind: str
    subject: Tuple
    axis: Optional[str] = None
    frame: Optional[int] = None

    def series(self) -> "ParameterId":
        return ParameterId(self.kind, self.subject, self.axis, None)


class ParameterLayout:
    """Enumerates the parameter series of a topology and maps them to keys and classes."""

    def __init__(self, topology: SkeletonTopology):
        self.topology = topology
        for name in topology.joint_names:
            if ":" in name or "-" in name:
                raise ValueError(f"joint name {name!r} may not contain ':' or '-'")
        n = topology.n_joints
        self.joint_axes = [(j, a) for j in range(n) for a in range(3)]
        self.pairs = list(combinations(range(n), 2))
        # (edge index, edge index, shared joint)
        self.angles = []
        edges = topology.edges
        for e1, e2 in combinations(range(len(edges)), 2):
            shared = set(edges[e1]) & set(edges[e2])
            if len(shared) == 1:
                self.angles.append((e1, e2, shared.pop()))

    def n_series(self, kind: str) -> int:
        return {"pos": len(self.joint_axes), "vel": len(self.joint_axes),
                "dist": len(self.pairs), "ang": len(self.angles)}[kind]

    def joints_of(self, kind: str, index: int) -> Tuple[int, ...]:
        if kind in ("pos", "vel"):
            return (self.joint_axes[index][0],)
        if kind == "dist":
            return self.pairs[index]
        if kind == "ang":
            e1, e2, _ = self.angles[index]
            return tuple(sorted(set(self.topology.edges[e1]) | set(self.topology.edges[e2])))
        return ()

    def classes(self, kind: str, active: FrozenSet[int]) -> np.ndarray:
        """Class letter (A or N) per series of a per-frame kind."""
        return np.array([CLASS_ACTIVE if any(j in active for j in self.joints_of(kind, i))
                         else CLASS_INACTIVE for i in range(self.n_series(kind))])

    def _edge_name(self, e: int) -> str:
        a, b = self.topology.edges[e]
        names = self.topology.joint_names
        return f"{names[a]}-{names[b]}"

    def series_key(self, kind: str, index: int) -> str:
        names = self.topology.joint_names
        if kind in ("pos", "vel"):
            j, a = self.joint_axes[index]
            return f"{kind}:{names[j]}:{AXES[a]}"
        if kind == "dist":
            j1, j2 = self.pairs[index]
            return f"dist:{names[j1]}:{names[j2]}"
        if kind == "ang":
            e1, e2, _ = self.angles[index]
            return f"ang:{self._edge_name(e1)}:{self._edge_name(e2)}"
        raise KeyError(kind)

    @cached_property
    def _series_lookup(self) -> Dict[str, Tuple[str, int]]:
        return {self.series_key(k, i): (k, i)
                for k in FRAME_KINDS for i in range(self.n_series(k))}

    def parse_series_key(self, key: str) -> Tuple[str, int]:
        return self._series_lookup[key]

    def parameter_id(self, kind: str, index: int, frame: Optional[int] = None) -> ParameterId:
        if kind in ("pos", "vel"):
            j, a = self.joint_axes[index]
            return ParameterId(kind, (j,), AXES[a], frame)
        if kind == "dist":
            return ParameterId(kind, self.pairs[index], None, frame)
        if kind == "ang":
            e1, e2, _ = self.angles[index]
            return ParameterId(kind, (e1, e2), None, frame)
        raise KeyError(kind)

    def describe(self, kind: str, index: int) -> str:
        """Human-readable series name used in feedback."""
        names = self.topology.joint_names
        if kind == "pos":
            j, a = self.joint_axes[index]
            return f"{names[j]} {AXES[a]}-position"
        if kind == "vel":
            j, a = self.joint_axes[index]
            return f"{names[j]} {AXES[a]}-velocity"
        if kind == "dist":
            j1, j2 = self.pairs[index]
            return f"distance between {names[j1]} and {names[j2]}"
        if kind == "ang":
            e1, e2, c = self.angles[index]
            others = [j for e in (e1, e2) for j in self.topology.edges[e] if j != c]
            return f"{names[c]} angle ({names[others[0]]}, {names[others[1]]})"
        raise KeyError(kind)


def time_key(index: int) -> str:
    return "time:total" if index == 0 else f"time:seg:{index - 1}"


def describe_time(index: int) -> str:
    return "movement" if index == 0 else f"segment {index - 1}"


@dataclass
class FeatureSet:
    """Per-frame series (``frames x series`` arrays per kind) plus the time parameters."""

    frames: Dict[str, np.ndarray]
    time: np.ndarray


def joint_angles(frames: np.ndarray, topology: SkeletonTopology, layout: ParameterLayout) -> np.ndarray:
    """Angles in radians; NaN where an involved edge has zero length."""
    n_frames = frames.shape[0]
    if not layout.angles:
        return np.zeros((n_frames, 0))
    out = np.empty((n_frames, len(layout.angles)))
    for k, (e1, e2, c) in enumerate(layout.angles):
        a = next(j for j in topology.edges[e1] if j != c)
        b = next(j for j in topology.edges[e2] if j != c)
        u = frames[:, a] - frames[:, c]
        v = frames[:, b] - frames[:, c]
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.einsum("fi,fi->f", u, v) / (nu * nv)
        ang = np.arccos(np.clip(cos, -1.0, 1.0))
        ang[(nu == 0) | (nv == 0)] = np.nan
        out[:, k] = ang
    return out


def extract_frame_features(video: SkeletonVideo, layout: ParameterLayout = None,
                           time_values: Optional[np.ndarray] = None) -> FeatureSet:
    """Extract every per-frame series of ``video``.

    ``time_values`` are the original (pre-warp) total length followed by the
    original inter-PoI stretch lengths; see :func:`time_parameters`.
    """
    layout = layout or ParameterLayout(video.topology)
    x = video.frames
    n = video.n_frames
    pos = x.reshape(n, -1)
    vel = np.diff(x, axis=0).reshape(max(n - 1, 0), pos.shape[1])
    if layout.pairs:
        i = np.array([p[0] for p in layout.pairs])
        j = np.array([p[1] for p in layout.pairs])
        dist = np.linalg.norm(x[:, i] - x[:, j], axis=2)
    else:
        dist = np.zeros((n, 0))
    ang = joint_angles(x, video.topology, layout)
    time = np.zeros(0) if time_values is None else np.asarray(time_values, dtype=float)
    return FeatureSet({"pos": pos, "vel": vel, "dist": dist, "ang": ang}, time)


def time_parameters(original_length: int, pois) -> np.ndarray:
    """Original total length followed by the lengths of every stretch between adjacent PoIs."""
    return np.array([original_length, *pois.segment_lengths(original_length)], dtype=float)
