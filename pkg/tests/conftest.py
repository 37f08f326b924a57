"""
Pytest configuration và fixtures
"""
import numpy as np
import pytest
import torch

from app.core.config import TrainConfig, settings
from app.unif.dataio import bend_pose, generate_sequence, preset, save_dataset, split_indices
from app.unif.neural_sdf import build_model
from app.unif.skeleton import Pose, Skeleton, rotation_matrix


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale training experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale experiment, minutes of CPU time")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _single_thread():
    """Torch reductions in a fixed order"""
    torch.set_num_threads(1)


@pytest.fixture
def log_dir(tmp_path, monkeypatch):
    """Route JSON log sinks into the test directory"""
    path = tmp_path / "logs"
    monkeypatch.setattr(settings, "log_dir", str(path))
    return path


@pytest.fixture
def arm2():
    """Two-bone arm (shoulder, elbow, wrist along +x) and its capsule body"""
    return preset("arm2")


@pytest.fixture
def arm2_skeleton(arm2) -> Skeleton:
    return arm2[0]


@pytest.fixture
def line_skeleton() -> Skeleton:
    """Single bone from the origin to (0, 1, 0)"""
    return Skeleton(["a", "b"], [None, 0], np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), [(0, 1)])


@pytest.fixture
def tiny_config() -> TrainConfig:
    """Few points, narrow network, fast epochs"""
    return TrainConfig(
        epochs=3,
        frames_per_batch=2,
        surface_points=48,
        local_points=48,
        global_points=48,
        hidden_width=16,
        checkpoint_every=2,
        log_every=1,
        seed=5,
    )


@pytest.fixture
def tiny_model(arm2_skeleton, tiny_config):
    return build_model(arm2_skeleton, tiny_config)


@pytest.fixture
def bent_pose(arm2_skeleton) -> Pose:
    """Elbow bent 60 degrees about +z"""
    return bend_pose(arm2_skeleton, {"elbow": rotation_matrix([0, 0, 1], np.deg2rad(60.0))})


@pytest.fixture
def tiny_frames(arm2):
    skeleton, body = arm2
    return generate_sequence(skeleton, body, "sweep:elbow:0:90", 4, seed=3, points_per_frame=300)


@pytest.fixture
def dataset_dir(tmp_path, arm2):
    """Ten-frame elbow sweep saved to disk with stride-2 splits"""
    skeleton, body = arm2
    frames = generate_sequence(skeleton, body, "sweep:elbow:0:90", 10, seed=1, points_per_frame=200)
    root = tmp_path / "dataset"
    save_dataset(root, skeleton, frames, {"splits": split_indices(10, 2), "preset": "arm2"})
    return root
