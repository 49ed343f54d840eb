import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from amal.normalization import (DesignatedSkeleton, NormalizationError, align_to_body_plane,
                                compute_designated_skeleton, normalize_dimensions, normalize_video)
from amal.skeleton import SkeletonTopology, SkeletonVideo, edge_lengths

from conftest import chain_topology, random_video

PLANE = SkeletonTopology(("SpineBase", "ShoulderLeft", "ShoulderRight", "Hand"),
                         ((0, 1), (0, 2), (2, 3)), (0, 1, 2))
CANON = np.array([[0, 0, 0], [-1, 1, 0], [1, 1, 0], [1.5, 0.4, 0.7]], dtype=float)


def video_of(frames, topo=PLANE):
    return SkeletonVideo(topo, 30, np.asarray(frames, dtype=float))


def test_designated_single_constant():
    topo = chain_topology(3)
    f = np.array([[0, 0, 0], [0.3, 0, 0], [0, 0.3, 0]])
    d = compute_designated_skeleton([video_of(np.stack([f, f]), topo)])
    assert d.length(0, 1) == pytest.approx(0.30)


def test_designated_is_mean_of_person_means():
    topo = chain_topology(3)
    def vid(L, n):
        return video_of(np.stack([[[0, 0, 0], [L, 0, 0], [0, L, 0]]] * n), topo)
    # person 0 has many more frames; the result must not be frame-weighted
    d = compute_designated_skeleton([vid(0.2, 50), vid(0.4, 3)], ["a", "b"])
    assert d.length(0, 1) == pytest.approx(0.30)


def test_designated_alternating_frames():
    topo = chain_topology(3)
    frames = [[[0, 0, 0], [L, 0, 0], [0, 1, 0]] for L in (0.29, 0.31) * 5]
    assert compute_designated_skeleton([video_of(frames, topo)]).length(0, 1) == pytest.approx(0.30)


def test_designated_two_videos_same_person():
    topo = chain_topology(3)
    a = video_of([[[0, 0, 0], [0.2, 0, 0], [0, 1, 0]]], topo)
    b = video_of([[[0, 0, 0], [0.4, 0, 0], [0, 1, 0]]] * 3, topo)
    # one person: frames pooled across that person's videos
    assert compute_designated_skeleton([a, b], ["p", "p"]).length(0, 1) == pytest.approx(0.35)


def test_normalize_identity_at_designated():
    v = random_video(6, 5, seed=3)
    d = compute_designated_skeleton([v.with_frames(v.frames[:1])])
    first = v.with_frames(v.frames[:1])
    np.testing.assert_allclose(normalize_dimensions(first, d).frames, first.frames, atol=1e-12)


def test_chain_halved():
    topo = SkeletonTopology(("SpineBase", "ShoulderLeft", "ShoulderRight"), ((0, 1), (1, 2)), (0, 1, 2))
    v = video_of([[[0, 0, 0], [0.5, 0, 0], [0.5, 0.5, 0]]], topo)
    d = DesignatedSkeleton({(0, 1): 0.25, (1, 2): 0.25}, 0)
    out = normalize_dimensions(v, d).frames[0]
    np.testing.assert_allclose(out, [[0, 0, 0], [0.25, 0, 0], [0.25, 0.25, 0]])


def test_scaled_star_recovers_original():
    topo = SkeletonTopology(("SpineBase", "ShoulderLeft", "ShoulderRight", "Head"),
                            ((0, 1), (0, 2), (0, 3)), (0, 1, 2))
    rng = np.random.default_rng(5)
    base = rng.normal(size=(4, 3))
    base[0] = (0.3, -0.2, 1.0)
    d = compute_designated_skeleton([video_of([base], topo)])
    scaled = base[0] + 2 * (base - base[0])
    np.testing.assert_allclose(normalize_dimensions(video_of([scaled], topo), d).frames[0], base,
                               atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_edges_match_designated(seed):
    v = random_video(9, 6, seed=seed)
    other = random_video(9, 4, seed=seed + 1)
    d = compute_designated_skeleton([v, other])
    out = normalize_dimensions(v, d)
    want = np.array([d.length(a, b) for a, b in v.topology.edges])
    np.testing.assert_allclose(edge_lengths(out), np.broadcast_to(want, (6, len(want))), rtol=1e-9)


def test_zero_length_edge_is_error():
    topo = chain_topology(3)
    v = video_of([[[0, 0, 0], [0, 0, 0], [0, 1, 0]]], topo)
    with pytest.raises(NormalizationError):
        normalize_dimensions(v, DesignatedSkeleton({(0, 1): 1.0, (0, 2): 1.0}, 0))


def test_canonical_frame_is_fixed_point():
    np.testing.assert_allclose(align_to_body_plane(video_of([CANON])).frames[0], CANON, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rigid_motion_invariance(seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=seed).as_matrix()
    moved = CANON @ R.T + rng.uniform(-5, 5, 3)
    np.testing.assert_allclose(align_to_body_plane(video_of([moved])).frames[0], CANON, atol=1e-9)


def test_swapped_shoulders_flip_z():
    swapped = CANON.copy()
    swapped[[1, 2]] = swapped[[2, 1]]
    out = align_to_body_plane(video_of([swapped])).frames[0]
    assert out[3, 2] == pytest.approx(-CANON[3, 2])
    np.testing.assert_allclose(out[:3, 2], 0, atol=1e-12)


def test_collinear_reference_joints():
    frame = CANON.copy()
    frame[2] = (0, 2, 0)
    frame[1] = (0, 1, 0)
    with pytest.raises(NormalizationError):
        align_to_body_plane(video_of([frame]))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_plane_conventions(seed):
    v = random_video(7, 5, seed=seed)
    out = normalize_video(v, compute_designated_skeleton([v])).frames
    a, b, c = v.topology.reference_joints
    np.testing.assert_allclose(out[:, a], 0, atol=1e-9)
    np.testing.assert_allclose(out[:, b, 2], 0, atol=1e-9)
    np.testing.assert_allclose(out[:, c, 2], 0, atol=1e-9)
    mid = 0.5 * (out[:, b] + out[:, c])
    np.testing.assert_allclose(mid[:, [0, 2]], 0, atol=1e-9)
    assert np.all(mid[:, 1] > 0)
