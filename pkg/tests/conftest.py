import numpy as np
import pytest

from rigfusion.se3 import Pose


def random_pose(rng: np.random.Generator, trans_scale: float = 2.0) -> Pose:
    q = rng.normal(size=4)
    t = rng.uniform(-trans_scale, trans_scale, size=3)
    return Pose(q / np.linalg.norm(q), t)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
