"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports what it measured.
"""

import itertools
import logging
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from amal.alignment import (PoISet, detect_active_joints, detect_rest_sequences, warp_source_indices,
                            warp_to_reference)
from amal.assessment import assess_features, select_feedback
from amal.dtw import dtw_path
from amal.features import FeatureSet
from amal.model import leave_one_out_triplets
from amal.normalization import (align_to_body_plane, compute_designated_skeleton, normalize_dimensions,
                                normalize_video)
from amal.pipeline import assess, train
from amal.segmentation import segment_labels, sequence_score
from amal.skeleton import edge_lengths, write_video
from amal.synthetic import (HUMANOID, Perturbation, generate, perturb, person_specs,
                            planned_rest_frames)

RESULTS = []
MOVEMENTS = ("side_raise", "front_raise")


def record(number, ok, detail, elapsed=None, limit=None):
    if limit is not None:
        ok = ok and elapsed < limit
    timing = "" if elapsed is None else f" [{elapsed:.1f}s" + (f" / limit {limit:g}s]" if limit else "]")
    RESULTS.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}{timing}")
    return ok


@pytest.fixture(autouse=True)
def quiet():
    # partial-rest warnings are expected on perturbed videos
    logging.getLogger("amal").setLevel(logging.ERROR)
    yield
    logging.getLogger("amal").setLevel(logging.NOTSET)


# 1 ----------------------------------------------------------------- geometry

def test_geometry():
    t0 = time.perf_counter()
    videos = [generate(s) for s in person_specs("side_raise", 3, seed=1)]
    designated = compute_designated_skeleton(videos)
    want = np.array([designated.length(*e) for e in HUMANOID.edges])
    worst_len = max(np.max(np.abs(edge_lengths(normalize_dimensions(v, designated)) / want - 1))
                    for v in videos)

    base, l_sh, r_sh = HUMANOID.reference_joints
    v = videos[0]
    out = align_to_body_plane(v).frames
    mid = 0.5 * (out[:, l_sh] + out[:, r_sh])
    worst_plane = max(np.abs(out[:, base]).max(), np.abs(mid[:, [0, 2]]).max(),
                      np.abs(out[:, [l_sh, r_sh], 2]).max())
    upright = bool(np.all(mid[:, 1] > 0))

    rng = np.random.default_rng(0)
    worst_rigid = 0.0
    for rot in Rotation.random(100, random_state=rng):
        moved = v.with_frames(rot.apply(v.frames.reshape(-1, 3)).reshape(v.frames.shape)
                              + rng.normal(scale=5.0, size=3))
        worst_rigid = max(worst_rigid, np.abs(align_to_body_plane(moved).frames - out).max())
    elapsed = time.perf_counter() - t0
    ok = worst_len <= 1e-9 and worst_plane <= 1e-9 and upright and worst_rigid <= 1e-9
    assert record(1, ok, f"edge rel err {worst_len:.1e}, plane err {worst_plane:.1e}, "
                         f"rigid err {worst_rigid:.1e}", elapsed, 1.0)


# 2 ----------------------------------------------------------- leave-one-out

def loo_brute_force(obs):
    n = len(obs)
    mean = sum(obs) / n
    diffs = [abs(obs[i] - sum(obs[j] for j in range(n) if j != i) / (n - 1)) for i in range(n)]
    m = sum(diffs) / n
    s = (sum((d - m) ** 2 for d in diffs) / (n - 1)) ** 0.5
    return mean, m, s


def test_leave_one_out_oracle():
    t0 = time.perf_counter()
    sets = [[1.0, 2.0, 3.0], [0.5, 0.5, 0.5, 0.5], [2.0, -1.0, 4.0, 4.5], [0.1, 0.2, 0.4, 0.8, 1.6],
            [10.0, 12.0, 9.0, 11.0, 10.5, 9.5], [3.0, 3.0, 7.0], [-2.0, 0.0, 2.0, 5.0, 5.0, 1.0]]
    rng = np.random.default_rng(3)
    sets += [list(rng.normal(size=n)) for n in (3, 4, 5, 6) for _ in range(25)]
    worst = max(np.max(np.abs(leave_one_out_triplets(np.array(o)) - loo_brute_force(o))) for o in sets)
    example = leave_one_out_triplets(np.array([1.0, 2.0, 3.0]))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and example[1] == 1.0 and abs(example[2] - 0.8660) < 5e-5
    assert record(2, ok, f"{len(sets)} sets, max diff {worst:.1e}, {{1,2,3}} -> M={example[1]:g} "
                         f"S={example[2]:.4f}", elapsed, 1.0)


# 3 ------------------------------------------------------------ segmentation

def best_by_enumeration(labels):
    n = len(labels)
    score = {(a, b): sequence_score(labels[a:b + 1]) for a in range(n) for b in range(a, n)}
    best = -np.inf
    for cuts in itertools.product((False, True), repeat=n - 1):
        bounds, start = [], 0
        for i, cut in enumerate(cuts):
            if cut:
                bounds.append((start, i))
                start = i + 1
        bounds.append((start, n - 1))
        best = max(best, np.mean([score[r] for r in bounds]))
    return best


def test_segmentation_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    mismatches = 0
    for trial in range(500):
        n = int(rng.integers(1, 13))
        if trial % 2:
            labels = rng.integers(0, 3, size=n)
        else:
            labels = np.repeat(rng.integers(0, 3, size=n), rng.integers(1, 5, size=n))[:n]
        _, obj = segment_labels(labels)
        mismatches += not np.isclose(obj, best_by_enumeration(labels), rtol=1e-9, atol=1e-12)
    elapsed = time.perf_counter() - t0
    assert record(3, mismatches == 0, f"500 series, {mismatches} mismatches", elapsed, 30.0)


# 4 --------------------------------------------------------------------- DTW

def dtw_by_enumeration(x, y):
    d = np.linalg.norm(x[:, None] - y[None, :], axis=2)
    n, m = d.shape
    best = np.inf
    stack = [(0, 0, d[0, 0])]
    while stack:
        i, j, c = stack.pop()
        if (i, j) == (n - 1, m - 1):
            best = min(best, c)
            continue
        for a, b in ((i + 1, j), (i, j + 1), (i + 1, j + 1)):
            if a < n and b < m:
                stack.append((a, b, c + d[a, b]))
    return best


def test_dtw_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(200):
        x = rng.normal(size=(rng.integers(1, 9), 3))
        y = rng.normal(size=(rng.integers(1, 9), 3))
        mismatches += not np.isclose(dtw_path(x, y)[0], dtw_by_enumeration(x, y), rtol=1e-12)
    elapsed = time.perf_counter() - t0
    assert record(4, mismatches == 0, f"200 instances, {mismatches} mismatches", elapsed, 10.0)


# 5 ----------------------------------------------------------------- warping

def test_warping_contract():
    t0 = time.perf_counter()
    exact = identity = True
    recovered = {}
    for mv in MOVEMENTS:
        hits = 0
        for trial in range(100):
            spec = person_specs(mv, 1, seed=1000 + trial, noise_std=0.002)[0]
            v = generate(spec)
            n = normalize_video(v, compute_designated_skeleton([v]))
            active = detect_active_joints([n])
            rests = detect_rest_sequences(n, active)
            plan = planned_rest_frames(spec)
            hits += len(rests) == len(plan) and all(
                abs(r.start_frame - a) <= 3 and abs(r.end_frame - b) <= 3 for r, (a, b) in zip(rests, plan))
            if trial < 10:
                own = PoISet(tuple(i for ab in plan for i in ab))
                ref_spec = person_specs(mv, 1, seed=2000 + trial)[0]
                ref = PoISet(tuple(i for ab in planned_rest_frames(ref_spec) for i in ab))
                idx = warp_source_indices(own, v.n_frames, ref, ref_spec.resolved().duration)
                exact &= bool(np.array_equal(idx[list(ref.indices)], own.indices))
                identity &= warp_to_reference(v, own, own, v.n_frames) == v
        recovered[mv] = hits
    elapsed = time.perf_counter() - t0
    ok = exact and identity and all(h >= 95 for h in recovered.values())
    detail = ", ".join(f"{mv} rests {h}/100" for mv, h in recovered.items())
    assert record(5, ok, f"PoIs exact {exact}, self-warp identity {identity}, {detail}", elapsed, 30.0)


# 6 ------------------------------------------------------- perfect input

def test_perfect_input():
    t0 = time.perf_counter()
    rates = {}
    for mv in MOVEMENTS:
        good = []
        for s in range(5):
            videos = [generate(sp) for sp in person_specs(mv, 6, seed=100 + s)]
            for k in range(6):
                model, _ = train([v for i, v in enumerate(videos) if i != k])
                r = assess(model, videos[k])
                good.append(r.score >= 0.9 and len(r.feedback) <= 1)
        rates[mv] = float(np.mean(good))
    model, _ = train([generate(sp) for sp in person_specs("side_raise", 5, seed=100)])
    mean = FeatureSet({k: model.triplets[k][..., 0].copy() for k in model.triplets},
                      model.time_triplets[:, 0].copy())
    r = assess_features(model, mean)
    mean_ok = r.score == 1.0 and not r.feedback
    elapsed = time.perf_counter() - t0
    ok = mean_ok and all(rate >= 0.9 for rate in rates.values())
    detail = ", ".join(f"{mv} {rate:.1%} of 30 rotations" for mv, rate in rates.items())
    assert record(6, ok, f"{detail} (need 90%); model mean scores {r.score:g} with "
                         f"{len(r.feedback)} items", elapsed, 60.0)


# 7 ---------------------------------------------------- three-class study

MILD = ("amplitude", "elbow-bend", "hold-shorten")


def class_scores(mv, configs):
    """Scores of the proper (2), mild (1) and severe (0) videos under each config."""
    specs = person_specs(mv, 30, seed=7)
    videos = [generate(s) for s in specs]
    proper = videos[:15]
    middle = len(specs[0].resolved().keyposes) // 2
    test_mild, test_severe = [], []
    for i in range(15):
        v = videos[15 + i]
        kind = MILD[i % 3]
        if kind == "amplitude":
            p = Perturbation.amplitude(0.6)
        elif kind == "elbow-bend":
            p = Perturbation("elbow-bend", 1.0)
        else:
            p = Perturbation("hold-shorten", 0.9, frames=planned_rest_frames(specs[15 + i])[middle])
        test_mild.append(perturb(v, p))
        test_severe.append(perturb(v, Perturbation.amplitude(0.2 if i % 2 == 0 else 0.0)))

    out = {name: {2: [], 1: [], 0: []} for name in configs}
    for warp in sorted({c["warp"] for c in configs.values()}):
        names = [n for n, c in configs.items() if c["warp"] == warp]
        opts = {n: dict(segmentation=configs[n]["segmentation"], joint_grouping=configs[n]["joint_grouping"])
                for n in names}
        for k in range(15):
            model, _ = train([v for i, v in enumerate(proper) if i != k], warp=warp)
            for n in names:
                out[n][2].append(assess(model, proper[k], **opts[n]).score)
        model, _ = train(proper, warp=warp)
        for n in names:
            out[n][1] = [assess(model, v, **opts[n]).score for v in test_mild]
            out[n][0] = [assess(model, v, **opts[n]).score for v in test_severe]
    return out


def best_mean_f1(scores):
    """Best mean F1 over every pair of score thresholds (class 0 below t1, 2 at or above t2)."""
    truth = np.concatenate([[c] * len(s) for c, s in scores.items()])
    values = np.concatenate([s for s in scores.values()])
    uniq = np.unique(values)
    cuts = np.concatenate([[-np.inf], (uniq[1:] + uniq[:-1]) / 2, [np.inf]])
    best = 0.0
    for t1, t2 in itertools.combinations_with_replacement(cuts, 2):
        pred = np.where(values < t1, 0, np.where(values < t2, 1, 2))
        f1 = []
        for c in (0, 1, 2):
            tp = np.sum((pred == c) & (truth == c))
            denom = np.sum(pred == c) + np.sum(truth == c)
            f1.append(2 * tp / denom if denom else 0.0)
        best = max(best, float(np.mean(f1)))
    return best


def test_three_class_separation():
    t0 = time.perf_counter()
    configs = {
        "full": dict(warp="poi", segmentation=True, joint_grouping=True),
        "dtw": dict(warp="dtw", segmentation=True, joint_grouping=True),
        "no-DS": dict(warp="poi", segmentation=False, joint_grouping=True),
        "no-JG": dict(warp="poi", segmentation=True, joint_grouping=False),
    }
    ok = True
    parts = []
    for mv in MOVEMENTS:
        f1 = {name: best_mean_f1(s) for name, s in class_scores(mv, configs).items()}
        ok &= f1["full"] >= 0.90 and all(f1[n] <= f1["full"] for n in ("dtw", "no-DS", "no-JG"))
        parts.append(f"{mv} " + " ".join(f"{n}={v:.3f}" for n, v in f1.items()))
    elapsed = time.perf_counter() - t0
    assert record(7, ok, "mean F1: " + "; ".join(parts), elapsed, 300.0)


# 8 ---------------------------------------------------------------- feedback

def test_feedback_rules():
    t0 = time.perf_counter()
    rules = (select_feedback([0.30, 0.20, 0.08], [0, 1, 2]) == [0, 1]
             and len(select_feedback([0.1] * 7, range(7))) == 5
             and select_feedback([0.4, 0.3, 0.2, 0.15, 0.1, 0.08], range(6)) == [0, 1, 2, 3, 4]
             and select_feedback([0.2, 0.0], [0, 1]) == [0]
             and select_feedback([], []) == [])
    hits = 0
    targets = ("WristRight", "ElbowRight")
    # ten training people: with five, noisy timing spreads put a time parameter on top
    for s in range(50):
        target = targets[s % 2]
        videos = [generate(sp) for sp in person_specs("side_raise", 11, seed=500 + s)]
        model, _ = train(videos[:10])
        r = assess(model, perturb(videos[10], Perturbation.amplitude(0.5, target=target)))
        if r.feedback:
            hits += target in r.feedback[0].key.replace("-", ":").split(":")
    elapsed = time.perf_counter() - t0
    ok = rules and hits >= 45
    assert record(8, ok, f"stopping rules {rules}, top item names the joint in {hits}/50", elapsed, 60.0)


# 9 ------------------------------------------------------------- determinism

def run_cli(args, threads):
    env = dict(os.environ, OMP_NUM_THREADS=threads, OPENBLAS_NUM_THREADS=threads,
               MKL_NUM_THREADS=threads)
    return subprocess.run([sys.executable, "-m", "amal.cli", *args], env=env, capture_output=True,
                          check=True).stdout


def test_determinism(tmp_path):
    t0 = time.perf_counter()
    videos = [generate(s) for s in person_specs("side_raise", 6, seed=21)]
    paths = []
    for i, v in enumerate(videos):
        paths.append(str(tmp_path / f"v{i}.skv"))
        write_video(paths[-1], v)
    models, reports = [], []
    for run, threads in enumerate(("1", "1", "4")):
        model = tmp_path / f"model{run}.txt"
        run_cli(["train", *paths[:5], "-o", str(model), "--seed", "3", "--jobs", threads], threads)
        models.append(model.read_bytes())
        reports.append(run_cli(["assess", str(model), paths[5], "--seed", "3"], threads))
    elapsed = time.perf_counter() - t0
    ok = len(set(models)) == 1 and len(set(reports)) == 1
    assert record(9, ok, f"3 train+assess runs (1, 1, 4 threads): {len(set(models))} distinct model(s), "
                         f"{len(set(reports))} distinct report(s)", elapsed)
