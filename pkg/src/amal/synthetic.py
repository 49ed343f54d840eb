"""Synthetic skeleton videos of arm-raise movements with planned rests.

Movements are sequences of right-arm key poses (shoulder elevation angles,
degrees). The arm holds each key pose during one planned rest and moves
between consecutive rests along a cosine-eased ramp, so velocities fall
smoothly to exactly zero inside the rests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .normalization import body_plane_rotations
from .skeleton import SkeletonTopology, SkeletonVideo

JOINTS = (
    "SpineBase", "SpineShoulder", "Head",
    "ShoulderLeft", "ElbowLeft", "WristLeft",
    "ShoulderRight", "ElbowRight", "WristRight",
    "HipLeft", "KneeLeft", "AnkleLeft",
    "HipRight", "KneeRight", "AnkleRight",
)
EDGES = (
    (0, 1), (1, 2), (1, 3), (3, 4), (4, 5), (1, 6), (6, 7), (7, 8),
    (0, 9), (9, 10), (10, 11), (0, 12), (12, 13), (13, 14),
)
HUMANOID = SkeletonTopology(JOINTS, EDGES, (0, 3, 6))
# tracked more steadily than the limbs; their jitter also tilts the body plane
TRUNK_JOINTS = (0, 1, 3, 6, 9, 12)

# right-arm elevation key poses (degrees) and the plane the arm moves in
MOVEMENTS: Dict[str, Tuple[Tuple[float, ...], str]] = {
    # raise aside to 90 degrees, hold, lower: rests at start, top, end
    "side_raise": ((0.0, 90.0, 0.0), "side"),
    # raise in front to 90, then overhead, back to 90, then down
    "front_raise": ((0.0, 90.0, 180.0, 90.0, 0.0), "front"),
}
DEFAULT_REST_PLANS = {
    "side_raise": ((0.0, 0.1), (0.44, 0.12), (0.9, 0.1)),
    "front_raise": ((0.0, 0.06), (0.235, 0.06), (0.47, 0.06), (0.705, 0.06), (0.94, 0.06)),
}
# Short rests keep the flipped-velocity threshold well above the jitter floor.
DEFAULT_DURATIONS = {"side_raise": 150, "front_raise": 225}

# segment lengths in meters: spine, neck, clavicle, upper arm, forearm, pelvis, thigh, shin
_BASE_LENGTHS = dict(spine=0.50, neck=0.25, clavicle=0.18, upper=0.30, fore=0.27,
                     pelvis=0.11, thigh=0.45, shin=0.42)


class SyntheticSpecError(ValueError):
    pass


@dataclass(frozen=True)
class MovementSpec:
    movement: str = "side_raise"
    rest_plan: Optional[Tuple[Tuple[float, float], ...]] = None
    duration: Optional[int] = None
    fps: float = 30.0
    noise_std: float = 0.002
    seed: int = 0
    keyposes: Optional[Tuple[float, ...]] = None
    limb_scale: Tuple[float, float, float] = (1.0, 1.0, 1.0)  # arms, legs, trunk
    amplitude_offsets: Optional[Tuple[float, ...]] = None  # degrees, per key pose
    elbow_flexion: float = 0.0  # degrees
    left_arm_angle: float = 0.0  # degrees, resting left arm abduction
    camera_yaw: float = 0.0  # degrees
    camera_position: Tuple[float, float, float] = (0.0, 0.9, 2.5)
    trunk_jitter: float = 0.25  # trunk joint jitter as a fraction of noise_std
    jitter_smoothing: float = 2.0  # temporal correlation of the jitter (Gaussian sigma, frames)
    topology: SkeletonTopology = field(default=HUMANOID, repr=False)

    def resolved(self) -> "MovementSpec":
        if self.movement not in MOVEMENTS:
            raise SyntheticSpecError(f"unknown movement {self.movement!r}")
        out = self
        if out.keyposes is None:
            out = replace(out, keyposes=MOVEMENTS[self.movement][0])
        if out.rest_plan is None:
            out = replace(out, rest_plan=DEFAULT_REST_PLANS[self.movement])
        if out.duration is None:
            out = replace(out, duration=DEFAULT_DURATIONS[self.movement])
        if out.amplitude_offsets is None:
            out = replace(out, amplitude_offsets=(0.0,) * len(out.keyposes))
        return out


def planned_rest_frames(spec: MovementSpec) -> List[Tuple[int, int]]:
    """Inclusive frame ranges of the planned rests."""
    spec = spec.resolved()
    if spec.duration < 30:
        raise SyntheticSpecError("duration must be at least 30 frames")
    if spec.noise_std < 0 or spec.trunk_jitter < 0 or spec.jitter_smoothing < 0:
        raise SyntheticSpecError("noise_std, trunk_jitter and jitter_smoothing must be non-negative")
    if not spec.fps > 0:
        raise SyntheticSpecError("fps must be positive")
    if len(spec.rest_plan) != len(spec.keyposes):
        raise SyntheticSpecError(
            f"rest plan has {len(spec.rest_plan)} rests for {len(spec.keyposes)} key poses")
    last = spec.duration - 1
    frames = []
    for start, dur in spec.rest_plan:
        if start < 0 or dur <= 0 or start + dur > 1 + 1e-9:
            raise SyntheticSpecError(f"rest ({start}, {dur}) outside the video")
        a = int(round(start * last))
        b = min(last, int(round((start + dur) * last)))
        if b <= a:
            raise SyntheticSpecError(f"rest ({start}, {dur}) is shorter than 2 frames")
        if frames and a <= frames[-1][1] + 2:
            raise SyntheticSpecError("rests overlap or leave no room for motion")
        frames.append((a, b))
    return frames


def elevation_profile(spec: MovementSpec) -> np.ndarray:
    """Right-arm elevation angle (radians) per frame."""
    spec = spec.resolved()
    rests = planned_rest_frames(spec)
    angles = np.radians(np.asarray(spec.keyposes) + np.asarray(spec.amplitude_offsets))
    out = np.empty(spec.duration)
    out[:rests[0][0] + 1] = angles[0]
    for i, (a, b) in enumerate(rests):
        out[a:b + 1] = angles[i]
        if i + 1 < len(rests):
            nxt = rests[i + 1][0]
            t = np.arange(b + 1, nxt)
            u = (t - b) / (nxt - b)
            out[b + 1:nxt] = angles[i] + (1 - np.cos(np.pi * u)) / 2 * (angles[i + 1] - angles[i])
    out[rests[-1][1]:] = angles[-1]
    return out


def _rotate(v: np.ndarray, axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation of vectors ``v`` (..., 3) about unit ``axis`` (..., 3)."""
    angle = np.asarray(angle)[..., None]
    cos, sin = np.cos(angle), np.sin(angle)
    dot = (v * axis).sum(axis=-1, keepdims=True)
    return v * cos + np.cross(axis, v) * sin + axis * dot * (1 - cos)


def body_frames(spec: MovementSpec) -> np.ndarray:
    """Noise-free joint positions in the body frame (x right, y up), shape (F, 15, 3)."""
    spec = spec.resolved()
    theta = elevation_profile(spec)
    n = len(theta)
    arm, leg, trunk = spec.limb_scale
    L = {k: v for k, v in _BASE_LENGTHS.items()}
    for k in ("clavicle", "upper", "fore"):
        L[k] *= arm
    for k in ("thigh", "shin"):
        L[k] *= leg
    for k in ("spine", "neck", "pelvis"):
        L[k] *= trunk

    x = np.zeros((n, 15, 3))
    up = np.array([0.0, 1.0, 0.0])
    down = -up
    x[:, 1] = up * L["spine"]
    x[:, 2] = x[:, 1] + up * L["neck"]
    x[:, 3] = x[:, 1] + np.array([-L["clavicle"], 0, 0])
    x[:, 6] = x[:, 1] + np.array([L["clavicle"], 0, 0])
    hip_dir = np.array([1.0, -0.4, 0.0]) / np.hypot(1.0, 0.4)
    x[:, 9] = hip_dir * [-1, 1, 1] * L["pelvis"]
    x[:, 12] = hip_dir * L["pelvis"]
    for hip, knee, ankle in ((9, 10, 11), (12, 13, 14)):
        x[:, knee] = x[:, hip] + down * L["thigh"]
        x[:, ankle] = x[:, knee] + down * L["shin"]

    # resting left arm, slightly abducted
    la = np.radians(spec.left_arm_angle)
    left_dir = np.array([-np.sin(la), -np.cos(la), 0.0])
    x[:, 4] = x[:, 3] + left_dir * L["upper"]
    x[:, 5] = x[:, 4] + left_dir * L["fore"]

    plane = MOVEMENTS[spec.movement][1]
    if plane == "side":
        u = np.stack([np.sin(theta), -np.cos(theta), np.zeros(n)], axis=1)
        axis = np.array([0.0, 0.0, 1.0])
    else:  # front: the arm swings through -z
        u = np.stack([np.zeros(n), -np.cos(theta), -np.sin(theta)], axis=1)
        axis = np.array([1.0, 0.0, 0.0])
    fore = _rotate(u, np.broadcast_to(axis, u.shape), np.radians(spec.elbow_flexion))
    x[:, 7] = x[:, 6] + u * L["upper"]
    x[:, 8] = x[:, 7] + fore * L["fore"]
    return x


def _camera(spec: MovementSpec) -> Tuple[np.ndarray, np.ndarray]:
    yaw = np.radians(spec.camera_yaw)
    rot = np.array([[np.cos(yaw), 0, np.sin(yaw)], [0, 1, 0], [-np.sin(yaw), 0, np.cos(yaw)]])
    return rot, np.asarray(spec.camera_position, dtype=float)


def _jitter(rng, shape, std: float, sigma: float) -> np.ndarray:
    """Gaussian noise of standard deviation ``std``, smoothed along axis 0."""
    white = rng.normal(0.0, 1.0, shape)
    if sigma <= 0:
        return std * white
    impulse = gaussian_filter1d(np.eye(1, 64, 32)[0], sigma)
    return std * gaussian_filter1d(white, sigma, axis=0) / np.sqrt(np.sum(impulse ** 2))


def generate(spec: MovementSpec) -> SkeletonVideo:
    """Render ``spec`` in camera coordinates with additive Gaussian jitter.

    Limb joints get ``noise_std``; trunk joints ``trunk_jitter * noise_std``.
    Jitter is low-pass filtered over time, as skeleton trackers smooth their output.
    """
    spec = spec.resolved()
    body = body_frames(spec)
    rot, pos = _camera(spec)
    frames = body @ rot.T + pos
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        scale = np.ones(frames.shape[1])
        scale[list(TRUNK_JOINTS)] = spec.trunk_jitter
        frames = frames + _jitter(rng, frames.shape, spec.noise_std, spec.jitter_smoothing) * scale[None, :, None]
    return SkeletonVideo(spec.topology, spec.fps, frames)


def _person_timing(base_plan: np.ndarray, base_duration: int, rng, rest_spread: float = 0.4,
                   move_spread: float = 0.15) -> Tuple[Tuple[Tuple[float, float], ...], int]:
    """Rest plan and duration with every segment length varied independently.

    Holds vary more between people than the motions do.
    """
    last = base_duration - 1
    bounds = [0]
    for start, dur in base_plan:
        bounds += [int(round(start * last)), int(round((start + dur) * last))]
    bounds = bounds[2:]  # the first rest starts the video
    lengths = np.diff([0] + bounds).astype(float)
    spread = np.where(np.arange(len(lengths)) % 2 == 0, rest_spread, move_spread)
    lengths *= rng.uniform(1 - spread, 1 + spread)
    frames = np.concatenate([[0], np.cumsum(np.maximum(2, np.round(lengths)))]).astype(int)
    last = int(frames[-1])
    plan = tuple((float(frames[i] / last), float((frames[i + 1] - frames[i]) / last))
                 for i in range(0, len(frames) - 1, 2))
    return plan, last + 1


def person_specs(movement: str, count: int, seed: int = 0, noise_std: float = 0.002,
                 fps: float = 30.0, pose_variation: float = 1.0) -> List[MovementSpec]:
    """Specs of ``count`` different people performing ``movement`` properly.

    People differ in limb lengths (up to 10%), camera pose, the length of every
    rest and motion segment, small amplitude offsets and a slight elbow flexion.
    """
    if movement not in MOVEMENTS:
        raise SyntheticSpecError(f"unknown movement {movement!r}")
    rng = np.random.default_rng(seed)
    base_plan = np.array(DEFAULT_REST_PLANS[movement])
    base_duration = DEFAULT_DURATIONS[movement]
    n_keys = len(MOVEMENTS[movement][0])
    specs = []
    for i in range(count):
        plan, duration = _person_timing(base_plan, base_duration, rng)
        offsets = rng.uniform(-1.25, 1.25, n_keys) * pose_variation
        offsets[0] = offsets[-1] = rng.uniform(-0.5, 0.5) * pose_variation
        specs.append(MovementSpec(
            movement=movement,
            rest_plan=plan,
            duration=duration,
            fps=fps,
            noise_std=noise_std,
            seed=int(rng.integers(2**31)),
            limb_scale=tuple(float(s) for s in rng.uniform(0.9, 1.1, 3)),
            amplitude_offsets=tuple(float(o) for o in offsets),
            elbow_flexion=float(rng.uniform(0.0, 2.5) * pose_variation),
            left_arm_angle=float(rng.uniform(0.0, 3.0) * pose_variation),
            camera_yaw=float(rng.uniform(-30, 30)),
            camera_position=(float(rng.uniform(-0.4, 0.4)), float(rng.uniform(0.8, 1.0)),
                             float(rng.uniform(2.0, 3.0))),
        ))
    return specs


# ---------------------------------------------------------------- perturbations

PERTURBATION_KINDS = ("amplitude-scale", "tempo-scale", "tremor", "hold-shorten",
                      "wrong-joint-activation", "elbow-bend")


@dataclass(frozen=True)
class Perturbation:
    """A controlled deviation from the proper movement.

    ``magnitude`` is a severity (0 is the identity):

    * amplitude-scale: displacement factor ``1 - magnitude``
    * tempo-scale: time factor ``1 + magnitude``
    * tremor: sinusoidal jitter of ``magnitude`` cm at ``frequency`` Hz
    * hold-shorten: drops that fraction of the ``frames`` range (required)
    * wrong-joint-activation: lifts the ``target`` joint by ``magnitude`` x 10 cm
    * elbow-bend: bends at the ``target`` elbow by ``magnitude`` x 30 degrees

    ``target`` names joints (default: the joints that move, or the left wrist /
    right elbow for the last two kinds); ``frames`` is an inclusive frame
    range (default: the whole video).
    """

    kind: str
    magnitude: float
    target: object = None
    frames: Optional[Tuple[int, int]] = None
    frequency: float = 5.0
    seed: int = 0

    @classmethod
    def amplitude(cls, factor: float, target=None, frames=None) -> "Perturbation":
        return cls("amplitude-scale", 1.0 - factor, target, frames)

    @classmethod
    def tempo(cls, factor: float, frames=None) -> "Perturbation":
        return cls("tempo-scale", factor - 1.0, frames=frames)


def moving_joints(video: SkeletonVideo, min_displacement: float = 0.05) -> List[int]:
    """Joints whose largest displacement from the first frame exceeds ``min_displacement`` m."""
    disp = np.linalg.norm(video.frames - video.frames[:1], axis=2).max(axis=0)
    return [int(j) for j in np.flatnonzero(disp > min_displacement)]


def _joint_targets(video: SkeletonVideo, target) -> List[int]:
    if target is None:
        return moving_joints(video)
    names = [target] if isinstance(target, (str, int)) else list(target)
    out = []
    for t in names:
        if isinstance(t, str):
            try:
                out.append(video.topology.index(t))
            except KeyError:
                raise SyntheticSpecError(f"unknown target joint {t!r}") from None
        elif 0 <= int(t) < video.topology.n_joints:
            out.append(int(t))
        else:
            raise SyntheticSpecError(f"unknown target joint {t!r}")
    return out


def _frame_range(video: SkeletonVideo, target) -> Tuple[int, int]:
    if target is None:
        return 0, video.n_frames - 1
    try:
        a, b = (int(t) for t in target)
    except (TypeError, ValueError):
        raise SyntheticSpecError(f"frames must be a (start, end) range, got {target!r}") from None
    if not 0 <= a <= b < video.n_frames:
        raise SyntheticSpecError(f"unknown target segment {target!r}")
    return a, b


def _resample_range(frames: np.ndarray, a: int, b: int, new_len: int) -> np.ndarray:
    seg = frames[a:b + 1]
    if new_len == 1 or len(seg) == 1:
        idx = np.zeros(new_len)
    else:
        idx = np.linspace(0, len(seg) - 1, new_len)
    lo = np.floor(idx).astype(int)
    hi = np.minimum(lo + 1, len(seg) - 1)
    w = (idx - lo)[:, None, None]
    return seg[lo] * (1 - w) + seg[hi] * w


def _descendants(video: SkeletonVideo, joint: int) -> List[int]:
    children: Dict[int, List[int]] = {}
    for p, q in video.topology.bfs_edges(video.topology.spine_base):
        children.setdefault(p, []).append(q)
    out, stack = [], list(children.get(joint, []))
    while stack:
        j = stack.pop()
        out.append(j)
        stack.extend(children.get(j, []))
    return sorted(out)


def perturb(video: SkeletonVideo, p: Perturbation) -> SkeletonVideo:
    if p.kind not in PERTURBATION_KINDS:
        raise SyntheticSpecError(f"unknown perturbation kind {p.kind!r}")
    if p.magnitude == 0:
        return video
    x = np.array(video.frames)
    n = video.n_frames

    if p.kind == "amplitude-scale":
        joints = _joint_targets(video, p.target)
        a, b = _frame_range(video, p.frames)
        base = x[:1, joints]
        x[a:b + 1, joints] = base + (1.0 - p.magnitude) * (x[a:b + 1, joints] - base)
        return video.with_frames(x)

    if p.kind == "tempo-scale":
        factor = 1.0 + p.magnitude
        if factor <= 0:
            raise SyntheticSpecError("tempo factor must be positive")
        a, b = _frame_range(video, p.frames)
        new_len = max(1, int(round((b - a + 1) * factor)))
        mid = _resample_range(x, a, b, new_len)
        return video.with_frames(np.concatenate([x[:a], mid, x[b + 1:]]))

    if p.kind == "hold-shorten":
        if not 0 <= p.magnitude < 1:
            raise SyntheticSpecError("hold-shorten magnitude must be in [0, 1)")
        if p.frames is None:
            raise SyntheticSpecError("hold-shorten needs the frame range of the hold")
        a, b = _frame_range(video, p.frames)
        length = b - a + 1
        drop = int(round(length * p.magnitude))
        keep_head = (length - drop) // 2
        cut0 = a + keep_head
        return video.with_frames(np.concatenate([x[:cut0], x[cut0 + drop:]]))

    if p.kind == "tremor":
        joints = _joint_targets(video, p.target)
        rng = np.random.default_rng(p.seed)
        t = np.arange(n) / video.fps
        for j in joints:
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            phase = rng.uniform(0, 2 * np.pi)
            x[:, j] += np.outer(np.sin(2 * np.pi * p.frequency * t + phase),
                                direction) * (0.01 * p.magnitude)
        return video.with_frames(x)

    rot = body_plane_rotations(video)
    if p.kind == "wrong-joint-activation":
        joints = _joint_targets(video, p.target if p.target is not None else "WristLeft")
        bump = np.sin(np.pi * np.arange(n) / max(n - 1, 1)) ** 2 * (0.1 * p.magnitude)
        for j in joints:
            x[:, j] += rot[:, 1] * bump[:, None]
        return video.with_frames(x)

    # elbow-bend: rotate everything below the elbow about the lateral body axis
    elbow = _joint_targets(video, p.target if p.target is not None else "ElbowRight")[0]
    below = _descendants(video, elbow)
    angle = np.radians(30.0 * p.magnitude)
    axis = rot[:, 0]
    for j in below:
        rel = x[:, j] - x[:, elbow]
        x[:, j] = x[:, elbow] + _rotate(rel, axis, np.full(n, angle))
    return video.with_frames(x)
