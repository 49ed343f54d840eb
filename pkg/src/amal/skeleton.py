"""Skeleton video data model and the SKV text format.

An SKV file is line oriented::

    SKV 1
    fps 30
    joints SpineBase ShoulderLeft ShoulderRight
    edges 0-1 0-2
    refs 0 1 2
    frame
    0 0 0
    -0.2 0.5 0
    0.2 0.5 0
    ...

Blank lines and lines starting with ``#`` are ignored everywhere.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

FORMAT_VERSION = 1
REFERENCE_ROLES = ("SpineBase", "ShoulderLeft", "ShoulderRight")


class SKVParseError(ValueError):
    """Raised when SKV text is malformed. Carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno
        self.reason = message


@dataclass(frozen=True)
class SkeletonTopology:
    joint_names: Tuple[str, ...]
    edges: Tuple[Tuple[int, int], ...]
    # indices of SpineBase, ShoulderLeft, ShoulderRight
    reference_joints: Tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(self.joint_names))
        object.__setattr__(
            self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        object.__setattr__(
            self, "reference_joints", tuple(int(i) for i in self.reference_joints))

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def spine_base(self) -> int:
        return self.reference_joints[0]

    def index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None

    def neighbors(self, joint: int) -> List[int]:
        """Adjacent joints in ascending index order."""
        out = set()
        for a, b in self.edges:
            if a == joint:
                out.add(b)
            elif b == joint:
                out.add(a)
        return sorted(out)

    def bfs_edges(self, root: int) -> List[Tuple[int, int]]:
        """Tree edges (parent, child) in BFS order, neighbors visited by ascending index."""
        seen = {root}
        order = []
        queue = deque([root])
        while queue:
            p = queue.popleft()
            for q in self.neighbors(p):
                if q not in seen:
                    seen.add(q)
                    order.append((p, q))
                    queue.append(q)
        return order

    def is_connected(self) -> bool:
        if not self.joint_names:
            return False
        return len(self.bfs_edges(0)) == self.n_joints - 1

    def violations(self) -> List[str]:
        out = []
        if len(set(self.joint_names)) != len(self.joint_names):
            out.append("topology: duplicate joint names")
        n = self.n_joints
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                out.append(f"topology: edge {a}-{b} references an unknown joint")
            elif a == b:
                out.append(f"topology: self-loop edge {a}-{b}")
        if len(self.reference_joints) != 3 or any(
                not 0 <= r < n for r in self.reference_joints):
            out.append("topology: reference joints missing")
        if not out and not self.is_connected():
            out.append("topology not connected")
        return out


@dataclass(frozen=True, eq=False)
class SkeletonVideo:
    """Frames of 3D joint positions, stored as an ``(n_frames, n_joints, 3)`` array.

    Missing joint positions are represented as NaN; :func:`validate` reports them.
    """

    topology: SkeletonTopology
    fps: float
    frames: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.frames, dtype=float)
        if arr.ndim != 3 or arr.shape[2] != 3:
            if arr.size == 0:
                arr = arr.reshape(0, self.topology.n_joints, 3)
            else:
                raise ValueError(f"frames must have shape (F, J, 3), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def __len__(self) -> int:
        return self.n_frames

    def with_frames(self, frames: np.ndarray) -> "SkeletonVideo":
        return SkeletonVideo(self.topology, self.fps, frames)

    def __eq__(self, other):
        if not isinstance(other, SkeletonVideo):
            return NotImplemented
        return (self.topology == other.topology and self.fps == other.fps
                and self.frames.shape == other.frames.shape
                and np.array_equal(self.frames, other.frames, equal_nan=True))

    def allclose(self, other: "SkeletonVideo", rtol=1e-6, atol=1e-9) -> bool:
        return (self.topology == other.topology
                and np.isclose(self.fps, other.fps)
                and self.frames.shape == other.frames.shape
                and np.allclose(self.frames, other.frames, rtol=rtol, atol=atol))


def validate(video: SkeletonVideo) -> List[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out = list(video.topology.violations())
    if not video.fps > 0:
        out.append(f"video: non-positive fps {video.fps}")
    if video.n_frames == 0:
        out.append("video: no frames")
    if video.frames.shape[1:] != (video.topology.n_joints, 3):
        out.append(f"video: frame shape {video.frames.shape[1:]} does not match "
                   f"{video.topology.n_joints} joints")
        return out
    bad = ~np.isfinite(video.frames).all(axis=2)
    for f in np.flatnonzero(bad.any(axis=1)):
        joints = [video.topology.joint_names[j] for j in np.flatnonzero(bad[f])]
        out.append(f"incomplete frame {f}: missing {', '.join(joints)}")
    return out


def _meaningful_lines(text: str) -> Iterable[Tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def _parse_float(tok: str, lineno: int, what: str) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise SKVParseError(lineno, f"bad {what} {tok!r}") from None
    if not np.isfinite(value):
        raise SKVParseError(lineno, f"non-finite {what} {tok!r}")
    return value


def parse_video(text: str) -> SkeletonVideo:
    lines = list(_meaningful_lines(text))
    if len(lines) < 5:
        last = lines[-1][0] if lines else 1
        raise SKVParseError(last, "truncated header")

    lineno, line = lines[0]
    if line.split() != ["SKV", str(FORMAT_VERSION)]:
        raise SKVParseError(lineno, f"expected 'SKV {FORMAT_VERSION}' header, got {line!r}")

    lineno, line = lines[1]
    toks = line.split()
    if len(toks) != 2 or toks[0] != "fps":
        raise SKVParseError(lineno, "expected 'fps <value>'")
    fps = _parse_float(toks[1], lineno, "fps")
    if fps <= 0:
        raise SKVParseError(lineno, f"fps must be positive, got {toks[1]}")

    lineno, line = lines[2]
    toks = line.split()
    if not toks or toks[0] != "joints" or len(toks) < 2:
        raise SKVParseError(lineno, "expected 'joints <name> ...'")
    names = toks[1:]
    if len(set(names)) != len(names):
        raise SKVParseError(lineno, "duplicate joint names")
    n = len(names)

    lineno, line = lines[3]
    toks = line.split()
    if not toks or toks[0] != "edges":
        raise SKVParseError(lineno, "expected 'edges <i>-<j> ...'")
    edges = []
    for tok in toks[1:]:
        parts = tok.split("-")
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise SKVParseError(lineno, f"bad edge {tok!r}")
        a, b = int(parts[0]), int(parts[1])
        if a >= n or b >= n:
            raise SKVParseError(lineno, f"edge {tok} references unknown joint")
        if a == b:
            raise SKVParseError(lineno, f"self-loop edge {tok}")
        edges.append((a, b))

    lineno, line = lines[4]
    toks = line.split()
    if len(toks) != 4 or toks[0] != "refs" or not all(t.isdigit() for t in toks[1:]):
        raise SKVParseError(lineno, "expected 'refs <spinebase> <shoulderleft> <shoulderright>'")
    refs = tuple(int(t) for t in toks[1:])
    if any(r >= n for r in refs):
        raise SKVParseError(lineno, "reference joint index out of range")

    topology = SkeletonTopology(tuple(names), tuple(edges), refs)
    if not topology.is_connected():
        raise SKVParseError(lines[3][0], "topology not connected")

    frames = []
    i = 5
    while i < len(lines):
        lineno, line = lines[i]
        if line != "frame":
            raise SKVParseError(lineno, f"expected 'frame', got {line!r}")
        if i + n >= len(lines):
            raise SKVParseError(lineno, f"frame {len(frames)} has fewer than {n} joint lines")
        coords = np.empty((n, 3))
        for j in range(n):
            lineno, line = lines[i + 1 + j]
            toks = line.split()
            if len(toks) != 3:
                raise SKVParseError(
                    lineno, f"expected 3 coordinates for joint {names[j]}, got {len(toks)}")
            coords[j] = [_parse_float(t, lineno, "coordinate") for t in toks]
        frames.append(coords)
        i += n + 1
    if not frames:
        raise SKVParseError(lines[-1][0], "no frames")
    return SkeletonVideo(topology, fps, np.stack(frames))


def _fmt(x: float) -> str:
    # shortest text that reads back as the same float
    x = float(x)
    if x == 0:
        return "0"
    s = repr(x)
    return s[:-2] if s.endswith(".0") else s


def serialize_video(video: SkeletonVideo) -> str:
    topo = video.topology
    out = [
        f"SKV {FORMAT_VERSION}",
        f"fps {video.fps:.10g}",
        "joints " + " ".join(topo.joint_names),
        "edges " + " ".join(f"{a}-{b}" for a, b in topo.edges),
        "refs " + " ".join(str(r) for r in topo.reference_joints),
    ]
    for frame in video.frames:
        out.append("frame")
        out.extend(" ".join(_fmt(c) for c in pos) for pos in frame)
    return "\n".join(out) + "\n"


def read_video(path) -> SkeletonVideo:
    with open(path, encoding="utf-8") as fh:
        return parse_video(fh.read())


def write_video(path, video: SkeletonVideo) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_video(video))


def edge_lengths(video: SkeletonVideo, edges: Sequence[Tuple[int, int]] = None) -> np.ndarray:
    """Per-frame edge lengths, shape ``(n_frames, n_edges)``."""
    edges = video.topology.edges if edges is None else edges
    a = np.array([e[0] for e in edges], dtype=int)
    b = np.array([e[1] for e in edges], dtype=int)
    return np.linalg.norm(video.frames[:, b] - video.frames[:, a], axis=2)
