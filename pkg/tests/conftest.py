import numpy as np
import pytest

from pointdet.data_io import SceneGenSpec, generate_scene


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_scene():
    """A compact labeled scene usable for sampling/recall/detector tests."""
    spec = SceneGenSpec(
        extent=14.0,
        background_points=600,
        instances_per_class=((1, 2), (1, 2), (1, 2)),
        points_per_instance=(50, 90),
        seed=7,
    )
    return generate_scene(spec, frame_id="s0")
