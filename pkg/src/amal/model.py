"""Leave-one-out statistical model and its text file format."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .alignment import PoISet
from .features import FRAME_KINDS, FeatureSet, ParameterLayout, time_key
from .normalization import DesignatedSkeleton
from .skeleton import SkeletonTopology

log = logging.getLogger(__name__)

MODEL_MAGIC = "AMALMODEL"
MODEL_VERSION = 1
WARP_METHODS = ("poi", "dtw", "none")


class ModelFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def leave_one_out_triplets(obs: np.ndarray) -> np.ndarray:
    """Triplets (mean, dev_mean, dev_std) along axis 0 of ``obs``.

    For observations o_1..o_n: the mean; d_i = |o_i - mean of the others|;
    the mean of d_i and their sample standard deviation. NaN observations are
    treated as missing; parameters with fewer than 3 observations get NaN.
    The result has shape ``obs.shape[1:] + (3,)``.
    """
    obs = np.asarray(obs, dtype=float)
    ok = np.isfinite(obs)
    cnt = ok.sum(axis=0)
    vals = np.where(ok, obs, 0.0)
    total = vals.sum(axis=0)
    enough = cnt >= 3
    safe = np.where(enough, cnt, 3)
    mean = total / safe
    others = (total - vals) / (safe - 1)
    d = np.where(ok, np.abs(vals - others), 0.0)
    dev_mean = d.sum(axis=0) / safe
    sq = np.where(ok, (d - dev_mean) ** 2, 0.0)
    dev_std = np.sqrt(sq.sum(axis=0) / (safe - 1))
    out = np.stack([mean, dev_mean, dev_std], axis=-1)
    out[~enough] = np.nan
    return out


@dataclass
class TrainedModel:
    topology: SkeletonTopology
    designated: DesignatedSkeleton
    active: frozenset
    reference_pois: PoISet
    reference_length: int
    # kind -> (frames, series, 3)
    triplets: Dict[str, np.ndarray]
    # (1 + segments, 3): total length then each inter-PoI stretch
    time_triplets: np.ndarray
    fps: float = 30.0
    warp: str = "poi"
    layout: ParameterLayout = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.active = frozenset(self.active)
        self.layout = ParameterLayout(self.topology)
        if self.warp not in WARP_METHODS:
            raise ValueError(f"unknown warp method {self.warp!r}")
        expected = len(self.reference_pois) + 2
        if len(self.time_triplets) != expected:
            raise ValueError(f"expected {expected} time triplets, got {len(self.time_triplets)}")

    @property
    def n_rests(self) -> int:
        return self.reference_pois.n_rests

    def frames_of(self, kind: str) -> int:
        return self.reference_length - 1 if kind == "vel" else self.reference_length

    def mean_video_frames(self) -> np.ndarray:
        """Model mean joint positions, shape (reference_length, joints, 3)."""
        return self.triplets["pos"][:, :, 0].reshape(self.reference_length, -1, 3)

    def parameter_counts(self) -> Dict[str, int]:
        """Number of per-frame scalar parameters per class, plus time parameters."""
        counts = {"A": 0, "N": 0, "T": 0}
        for kind in FRAME_KINDS:
            tri = self.triplets[kind]
            present = np.isfinite(tri[..., 0])
            for letter in ("A", "N"):
                sel = self.layout.classes(kind, self.active) == letter
                counts[letter] += int(present[:, sel].sum())
        counts["T"] = int(np.isfinite(self.time_triplets[:, 0]).sum())
        return counts


def fit_model(features: Sequence[FeatureSet], *, topology: SkeletonTopology,
              designated: DesignatedSkeleton, active, reference_pois: PoISet,
              reference_length: int, fps: float = 30.0, warp: str = "poi") -> TrainedModel:
    """Fit leave-one-out triplets for every parameter over aligned training features."""
    if len(features) < 3:
        raise ValueError(f"need >= 3 training videos, got {len(features)}")
    triplets = {}
    for kind in FRAME_KINDS:
        shapes = {f.frames[kind].shape for f in features}
        if len(shapes) != 1:
            raise ValueError(f"training features for {kind!r} differ in shape: {sorted(shapes)}")
        tri = leave_one_out_triplets(np.stack([f.frames[kind] for f in features]))
        dropped = int(np.isnan(tri[..., 0]).sum())
        if dropped:
            log.warning("dropped %d %s parameters with fewer than 3 observations", dropped, kind)
        triplets[kind] = tri
    time_obs = np.stack([f.time for f in features])
    return TrainedModel(topology, designated, frozenset(active), reference_pois,
                        reference_length, triplets, leave_one_out_triplets(time_obs),
                        fps=fps, warp=warp)


def _num(x: float) -> str:
    return repr(float(x))


def serialize_model(model: TrainedModel) -> str:
    topo = model.topology
    layout = model.layout
    out = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        "joints " + " ".join(topo.joint_names),
        "edges " + " ".join(f"{a}-{b}" for a, b in topo.edges),
        "refs " + " ".join(str(r) for r in topo.reference_joints),
        f"fps {_num(model.fps)}",
        f"warp {model.warp}",
        f"designated {model.designated.root_joint} "
        + " ".join(_num(model.designated.length(a, b)) for a, b in topo.edges),
        "active " + " ".join(str(j) for j in sorted(model.active)),
        model.reference_pois.to_text(),
        f"reflength {model.reference_length}",
    ]
    for kind in FRAME_KINDS:
        tri = model.triplets[kind]
        for s in range(tri.shape[1]):
            key = layout.series_key(kind, s)
            for f in range(tri.shape[0]):
                t = tri[f, s]
                if np.isfinite(t[0]):
                    out.append(f"{key}:{f} {_num(t[0])} {_num(t[1])} {_num(t[2])}")
    for k, t in enumerate(model.time_triplets):
        if np.isfinite(t[0]):
            out.append(f"{time_key(k)} {_num(t[0])} {_num(t[1])} {_num(t[2])}")
    return "\n".join(out) + "\n"


def _header_value(lines, pos, name):
    lineno, line = lines[pos]
    toks = line.split()
    if not toks or toks[0] != name:
        raise ModelFormatError(lineno, f"expected '{name}' section, got {line[:40]!r}")
    return lineno, toks[1:]


def parse_model(text: str) -> TrainedModel:
    lines = [(n, l.strip()) for n, l in enumerate(text.splitlines(), start=1)
             if l.strip() and not l.strip().startswith("#")]
    if not lines:
        raise ModelFormatError(1, "empty model file")
    lineno, line = lines[0]
    toks = line.split()
    if len(toks) != 2 or toks[0] != MODEL_MAGIC:
        raise ModelFormatError(lineno, f"not an {MODEL_MAGIC} file")
    if toks[1] != str(MODEL_VERSION):
        raise ModelFormatError(lineno, f"unsupported model version {toks[1]!r} "
                                       f"(this reader understands {MODEL_VERSION})")
    if len(lines) < 11:
        raise ModelFormatError(lines[-1][0], "truncated header")
    try:
        _, names = _header_value(lines, 1, "joints")
        ln, edge_toks = _header_value(lines, 2, "edges")
        edges = [tuple(int(x) for x in t.split("-")) for t in edge_toks]
        ln, ref_toks = _header_value(lines, 3, "refs")
        topology = SkeletonTopology(tuple(names), tuple(edges), tuple(int(x) for x in ref_toks))
        if topology.violations():
            raise ModelFormatError(ln, "; ".join(topology.violations()))
        _, fps_tok = _header_value(lines, 4, "fps")
        _, warp_tok = _header_value(lines, 5, "warp")
        ln, des = _header_value(lines, 6, "designated")
        if len(des) != len(edges) + 1:
            raise ModelFormatError(ln, f"expected root and {len(edges)} edge lengths")
        designated = DesignatedSkeleton(
            {e: float(v) for e, v in zip(topology.edges, des[1:])}, int(des[0]))
        _, act = _header_value(lines, 7, "active")
        _, poi_toks = _header_value(lines, 8, "pois")
        ln, rl = _header_value(lines, 9, "reflength")
        ref_len = int(rl[0])
        pois = PoISet(tuple(int(x) for x in poi_toks))
    except ModelFormatError:
        raise
    except (ValueError, IndexError) as exc:
        raise ModelFormatError(ln, f"malformed header: {exc}") from None

    layout = ParameterLayout(topology)
    triplets = {k: np.full((ref_len - 1 if k == "vel" else ref_len, layout.n_series(k), 3), np.nan)
                for k in FRAME_KINDS}
    n_time = len(pois) + 2
    time_tri = np.full((n_time, 3), np.nan)
    time_index = {time_key(k): k for k in range(n_time)}
    for lineno, line in lines[10:]:
        toks = line.split()
        key = toks[0]
        if len(toks) != 4:
            raise ModelFormatError(lineno, f"parameter {key}: expected 3 numbers, got {len(toks) - 1}")
        try:
            vals = [float(t) for t in toks[1:]]
        except ValueError:
            raise ModelFormatError(lineno, f"parameter {key}: non-numeric value") from None
        if key in time_index:
            time_tri[time_index[key]] = vals
            continue
        series, _, frame = key.rpartition(":")
        try:
            kind, s = layout.parse_series_key(series)
            f = int(frame)
            triplets[kind][f, s] = vals
        except (KeyError, ValueError, IndexError):
            raise ModelFormatError(lineno, f"unknown parameter {key}") from None
    return TrainedModel(topology, designated, frozenset(int(a) for a in act), pois, ref_len,
                        triplets, time_tri, fps=float(fps_tok[0]), warp=warp_tok[0])


def read_model(path) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def write_model(path, model: TrainedModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(model))
