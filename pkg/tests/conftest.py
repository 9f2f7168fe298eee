import numpy as np
import pytest

from mosaic import motions
from mosaic.motion_bank import MotionClip, build_bank
from mosaic.robot import default_model


@pytest.fixture(scope="session")
def model():
    return default_model()


def random_clip(rng, frames=None, dof=6, bodies=7, fps=50.0, source_id="test"):
    """A structurally valid clip with random (non-physical) contents."""
    L = int(frames if frames is not None else rng.integers(2, 200))
    quats = rng.normal(size=(L, bodies, 4))
    quats /= np.linalg.norm(quats, axis=-1, keepdims=True)
    return MotionClip(
        fps=fps,
        joint_pos=rng.normal(size=(L, dof)).astype(np.float32),
        joint_vel=rng.normal(size=(L, dof)).astype(np.float32),
        body_pos_w=rng.normal(size=(L, bodies, 3)).astype(np.float32),
        body_quat_w=quats.astype(np.float32),
        body_lin_vel_w=rng.normal(size=(L, bodies, 3)).astype(np.float32),
        body_ang_vel_w=rng.normal(size=(L, bodies, 3)).astype(np.float32),
        label="random",
        source_id=source_id,
    ).validate()


@pytest.fixture(scope="session")
def demo_bank(model):
    clips = [
        motions.make_squat_clip(model=model),
        motions.make_wave_clip(model=model),
        motions.make_walk_clip(model=model),
    ]
    return build_bank(clips)
