import numpy as np
import pytest

from wtslam.dataset_io import CameraIntrinsics


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(525.0, 525.0, 319.5, 239.5, 640, 480)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_descriptors(rng, n, dim=384):
    d = rng.standard_normal((n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)
