"""Command-line interface: ``amal train|assess|align|synth|inspect``.

Exit codes: 0 on success, 1 when the pipeline rejects the input (alignment or
assessment failures), 2 on usage, configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from typing import List, Optional, Sequence

from .alignment import AlignmentConfig, AlignmentError
from .assessment import AssessmentError, format_report
from .config import WARP_CHOICES, ConfigError, RunConfig, load_key_values, resolve
from .model import ModelFormatError, read_model, write_model
from .pipeline import align_for_model, align_pair, assess, train
from .skeleton import SKVParseError, read_video, write_video
from .synthetic import (PERTURBATION_KINDS, Perturbation, SyntheticSpecError, generate, perturb,
                        person_specs, planned_rest_frames)
from .weights import ScoreWeights

log = logging.getLogger("amal")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_constants(p: argparse.ArgumentParser, classes) -> None:
    g = p.add_argument_group("constants (override the config file)")
    for cls in classes:
        for f in fields(cls):
            typ = f.type if isinstance(f.type, type) else {"float": float, "int": int}[f.type]
            g.add_argument(_flag(f.name), dest=f.name, type=typ, default=None, metavar="X",
                           help=f"default {f.default}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags take precedence")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amal", description="Movement assessment from skeleton videos.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn a model from properly performed videos")
    p.add_argument("videos", nargs="+")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.add_argument("--warp", choices=WARP_CHOICES, default=None)
    p.add_argument("--jobs", type=int, default=1, help="parallel readers")
    _common(p)
    _add_constants(p, [AlignmentConfig])

    p = sub.add_parser("assess", help="score a video against a model")
    p.add_argument("model")
    p.add_argument("video")
    out = p.add_mutually_exclusive_group()
    out.add_argument("--score-only", action="store_true")
    out.add_argument("--feedback-only", action="store_true")
    p.add_argument("--tabular", action="store_true", help="tab-separated report")
    p.add_argument("--strict-warp", dest="strict_warp", action="store_const", const=True, default=None,
                   help="fail instead of placing PoIs that were not found")
    p.add_argument("--no-joint-grouping", dest="joint_grouping", action="store_const", const=False,
                   default=None)
    p.add_argument("--no-deviation-segmentation", dest="segmentation", action="store_const",
                   const=False, default=None)
    _common(p)
    _add_constants(p, [AlignmentConfig, ScoreWeights])

    p = sub.add_parser("align", help="warp a video onto a reference video or a model timeline")
    p.add_argument("video")
    ref = p.add_mutually_exclusive_group(required=True)
    ref.add_argument("--reference")
    ref.add_argument("--model")
    p.add_argument("-o", "--output", required=True, help="warped SKV file to write")
    p.add_argument("--method", choices=("poi", "dtw"), default="poi")
    _common(p)
    _add_constants(p, [AlignmentConfig])

    p = sub.add_parser("synth", help="generate synthetic videos from a key = value spec")
    p.add_argument("spec")
    p.add_argument("-o", "--output-dir", required=True)
    _common(p)

    p = sub.add_parser("inspect", help="summarize a model file")
    p.add_argument("model")
    _common(p)
    return parser


def _run_config(args) -> RunConfig:
    file_values = load_key_values(args.config) if args.config else {}
    flags = {k: getattr(args, k, None) for k in RunConfig.keys()}
    return resolve(file_values, flags)


def _read_videos(paths: Sequence[str], jobs: int = 1):
    # map keeps the input order, so results do not depend on ``jobs``
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(read_video, paths))


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if len(args.videos) < 3:
        raise UsageError(f"need >= 3 training videos, got {len(args.videos)}")
    videos = _read_videos(args.videos, args.jobs)
    model, report = train(videos, cfg=cfg.alignment, warp=cfg.warp)
    write_model(args.output, model)
    log.info("reference video: %s", args.videos[report.reference_index])
    return EXIT_OK


def cmd_assess(args) -> int:
    cfg = _run_config(args)
    model = read_model(args.model)
    video = read_video(args.video)
    result = assess(model, video, cfg.alignment, cfg.weights, segmentation=cfg.segmentation,
                    joint_grouping=cfg.joint_grouping, strict=cfg.strict_warp)
    sys.stdout.write(format_report(result, tabular=args.tabular, score_only=args.score_only,
                                   feedback_only=args.feedback_only))
    return EXIT_OK


def cmd_align(args) -> int:
    cfg = _run_config(args)
    video = read_video(args.video)
    if args.model:
        model = read_model(args.model)
        if args.method == "dtw" and model.warp != "dtw":
            model = replace(model, warp="dtw")
        aligned = align_for_model(model, video, cfg.alignment, strict=cfg.strict_warp)
        write_video(args.output, aligned.video)
        print("pois video " + " ".join(map(str, aligned.pois.indices)))
        print("pois reference " + " ".join(map(str, model.reference_pois.indices)))
        return EXIT_OK
    reference = read_video(args.reference)
    warped, pois = align_pair(video, reference, cfg.alignment, method=args.method)
    write_video(args.output, warped)
    if pois is not None:
        print("pois video " + " ".join(map(str, pois[0].indices)))
        print("pois reference " + " ".join(map(str, pois[1].indices)))
    return EXIT_OK


_SYNTH_KEYS = {
    "movement": str, "proper": int, "perturbed": int, "perturbation": str, "magnitude": float,
    "target": str, "frequency": float, "seed": int, "noise_std": float, "fps": float,
    "pose_variation": float, "prefix": str,
}


def synth_settings(values, seed: Optional[int] = None) -> dict:
    """Validated synthesis settings from ``key = value`` pairs."""
    out = {"movement": "side_raise", "proper": 5, "perturbed": 0, "perturbation": "amplitude-scale",
           "magnitude": 0.4, "target": None, "frequency": 5.0, "seed": 0, "noise_std": 0.002,
           "fps": 30.0, "pose_variation": 1.0, "prefix": ""}
    for key, value in values.items():
        if key not in _SYNTH_KEYS:
            raise ConfigError(f"unknown synth key {key!r}")
        try:
            out[key] = _SYNTH_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    if seed is not None:
        out["seed"] = seed
    if out["proper"] < 0 or out["perturbed"] < 0 or out["proper"] + out["perturbed"] == 0:
        raise ConfigError("proper and perturbed must be >= 0 and not both 0")
    if out["perturbation"] not in PERTURBATION_KINDS:
        raise ConfigError(f"perturbation must be one of {', '.join(PERTURBATION_KINDS)}")
    return out


def synthesize(settings: dict):
    """(file name, video) pairs for the proper and the perturbed people."""
    n_proper, n_bad = settings["proper"], settings["perturbed"]
    specs = person_specs(settings["movement"], n_proper + n_bad, seed=settings["seed"],
                         noise_std=settings["noise_std"], fps=settings["fps"],
                         pose_variation=settings["pose_variation"])
    pre = settings["prefix"]
    out = []
    for i, spec in enumerate(specs):
        video = generate(spec)
        if i < n_proper:
            out.append((f"{pre}proper_{i:02d}.skv", video))
            continue
        frames = None
        if settings["perturbation"] == "hold-shorten":
            rests = planned_rest_frames(spec)
            frames = rests[len(rests) // 2]
        target = settings["target"]
        if target is not None:
            target = [t.strip() for t in target.split(",")]
        p = Perturbation(settings["perturbation"], settings["magnitude"], target=target, frames=frames,
                         frequency=settings["frequency"], seed=settings["seed"] + i)
        out.append((f"{pre}perturbed_{i - n_proper:02d}.skv", perturb(video, p)))
    return out


def cmd_synth(args) -> int:
    values = load_key_values(args.spec)
    settings = synth_settings(values, args.seed)
    try:
        files = synthesize(settings)
    except (SyntheticSpecError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    os.makedirs(args.output_dir, exist_ok=True)
    for name, video in files:
        write_video(os.path.join(args.output_dir, name), video)
        print(os.path.join(args.output_dir, name))
    return EXIT_OK


def cmd_inspect(args) -> int:
    model = read_model(args.model)
    names = model.topology.joint_names
    counts = model.parameter_counts()
    print(f"joints {model.topology.n_joints}")
    print("active joints " + " ".join(names[j] for j in sorted(model.active)))
    print(f"rests {model.n_rests}")
    print("reference pois " + " ".join(map(str, model.reference_pois.indices)))
    print(f"reference length {model.reference_length}")
    print(f"fps {model.fps:g}")
    print(f"warp {model.warp}")
    for c in ("A", "N", "T"):
        print(f"parameters {c} {counts[c]}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "assess": cmd_assess, "align": cmd_align, "synth": cmd_synth,
            "inspect": cmd_inspect}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose > 1 else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, SKVParseError, ModelFormatError, OSError) as exc:
        print(f"amal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AlignmentError, AssessmentError, SyntheticSpecError, ValueError) as exc:
        print(f"amal: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
