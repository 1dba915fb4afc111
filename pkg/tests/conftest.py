import numpy as np
import pytest

from wiretrack.geometry import CameraIntrinsics, look_at
from wiretrack.wiremodel import unit_cube


@pytest.fixture
def k():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0)


@pytest.fixture
def k_distorted():
    return CameraIntrinsics(480.0, 470.0, 318.0, 242.0, k1=-0.15, k2=0.04)


@pytest.fixture
def cube():
    return unit_cube()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def corner_pose():
    # sees three faces of the unit cube
    return look_at([3.0, 2.0, 1.5], [0.0, 0.0, 0.0])


@pytest.fixture
def head_on_pose():
    # looking straight at the +x face
    return look_at([4.5, 0.0, 0.0], [0.0, 0.0, 0.0])
