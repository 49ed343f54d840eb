import sys

import numpy as np
import pytest

from amal.pipeline import train
from amal.skeleton import SkeletonTopology, SkeletonVideo
from amal.synthetic import generate, person_specs


def chain_topology(n: int) -> SkeletonTopology:
    """A path of ``n`` joints; joint 0 is SpineBase, 1 and 2 the shoulders."""
    names = ["SpineBase", "ShoulderLeft", "ShoulderRight"] + [f"J{i}" for i in range(3, n)]
    edges = [(0, 1), (0, 2)] + [(i - 1, i) for i in range(3, n)]
    return SkeletonTopology(tuple(names), tuple(edges), (0, 1, 2))


def random_video(n_joints=5, n_frames=10, seed=0, fps=30.0) -> SkeletonVideo:
    rng = np.random.default_rng(seed)
    topo = chain_topology(n_joints)
    base = rng.normal(size=(n_joints, 3))
    frames = base + 0.1 * rng.normal(size=(n_frames, n_joints, 3))
    return SkeletonVideo(topo, fps, frames)


@pytest.fixture(scope="session")
def side_people():
    specs = person_specs("side_raise", 8, seed=11)
    return specs, [generate(s) for s in specs]


@pytest.fixture(scope="session")
def side_model(side_people):
    _, videos = side_people
    model, report = train(videos[:5])
    return model, report


@pytest.fixture(scope="session")
def side_files(side_people, tmp_path_factory):
    """The side-raise people as SKV files, plus a model trained on the first five."""
    from amal.cli import main
    from amal.skeleton import write_video

    d = tmp_path_factory.mktemp("side")
    paths = []
    for i, v in enumerate(side_people[1]):
        paths.append(str(d / f"p{i}.skv"))
        write_video(paths[-1], v)
    model = str(d / "model.txt")
    assert main(["train", *paths[:5], "-o", model]) == 0
    return paths, model


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
