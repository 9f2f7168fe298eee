"""Synthetic reference clips for the toy chain.

Clips are generated kinematically: joint trajectories are smooth periodic
functions starting at the default pose with zero velocity, the base height
keeps the lowest foot on the ground, and all world-frame body fields come
from the chain's forward kinematics with central-difference velocities.
The three-clip demo bank (squat / wave / walk) doubles as the CLI's
deterministic sample data.
"""

from __future__ import annotations

import os

import numpy as np

from . import quat
from .motion_bank import MotionClip, write_clip
from .robot import RobotModel, default_model, fk


def _central_diff(x: np.ndarray, fps: float) -> np.ndarray:
    v = np.empty_like(x)
    v[1:-1] = (x[2:] - x[:-2]) * (fps / 2.0)
    v[0] = (x[1] - x[0]) * fps
    v[-1] = (x[-1] - x[-2]) * fps
    return v


def _assemble(base_x, pitch, q, fps: float, model: RobotModel,
              label: str, source_id: str) -> MotionClip:
    """FK the trajectory and pack a clip; base z keeps feet on the ground."""
    T = len(base_x)
    # solve base z per frame: foot_z = base_z + offset(q, pitch)
    probe, _ = fk(np.zeros((T, 2)), pitch, q, model)
    feet_rest = probe[:, list(model.feet), 1]
    base_z = -np.min(feet_rest, axis=-1)
    base = np.stack([base_x, base_z], axis=-1)

    pos2, ang = fk(base, pitch, q, model)
    B = model.num_bodies
    body_pos = np.zeros((T, B, 3), dtype=np.float32)
    body_pos[:, :, 0] = pos2[..., 0]
    body_pos[:, :, 2] = pos2[..., 1]
    body_quat = quat.quat_about_y(ang).astype(np.float32)
    body_lin = _central_diff(body_pos.astype(np.float64), fps).astype(np.float32)
    ang_vel = _central_diff(ang, fps)
    body_ang = np.zeros((T, B, 3), dtype=np.float32)
    body_ang[:, :, 1] = ang_vel

    return MotionClip(
        fps=fps,
        joint_pos=q.astype(np.float32),
        joint_vel=_central_diff(q, fps).astype(np.float32),
        body_pos_w=body_pos,
        body_quat_w=body_quat,
        body_lin_vel_w=body_lin,
        body_ang_vel_w=body_ang,
        label=label,
        source_id=source_id,
    ).validate()


def _times(duration: float, fps: float):
    T = int(round(duration * fps))
    return np.arange(T) / fps, T


def make_squat_clip(duration: float = 4.0, fps: float = 50.0, amp: float = 0.35,
                    freq: float = 0.5, model: RobotModel | None = None,
                    arm_amp: float = 0.2, source_id: str = "demo") -> MotionClip:
    """Periodic squat: hips/knees deepen together, base height follows."""
    model = model or default_model()
    t, T = _times(duration, fps)
    s = 0.5 * (1.0 - np.cos(2.0 * np.pi * freq * t))  # 0 at t=0, smooth
    q = np.tile(model.q_default, (T, 1))
    q[:, 0] += amp * s
    q[:, 1] -= 2.0 * amp * s
    q[:, 2] -= amp * s
    q[:, 3] += 2.0 * amp * s
    q[:, 4] += arm_amp * s
    base_x = np.zeros(T)
    pitch = np.zeros(T)
    return _assemble(base_x, pitch, q, fps, model, "squat cycle", source_id)


def make_wave_clip(duration: float = 4.0, fps: float = 50.0, amp: float = 0.6,
                   freq: float = 1.0, model: RobotModel | None = None,
                   source_id: str = "demo") -> MotionClip:
    """Arm wave with a nod; legs hold the default stance."""
    model = model or default_model()
    t, T = _times(duration, fps)
    ramp = np.minimum(1.0, t / 0.5)
    s = np.sin(2.0 * np.pi * freq * t) * ramp
    q = np.tile(model.q_default, (T, 1))
    q[:, 4] += amp * s
    q[:, 5] += 0.25 * amp * np.sin(2.0 * np.pi * freq * t + 0.5) * ramp - \
        0.25 * amp * np.sin(0.5) * ramp
    base_x = np.zeros(T)
    pitch = np.zeros(T)
    return _assemble(base_x, pitch, q, fps, model, "arm wave", source_id)


def make_walk_clip(duration: float = 6.0, fps: float = 50.0, speed: float = 0.25,
                   freq: float = 1.0, swing: float = 0.3,
                   model: RobotModel | None = None,
                   source_id: str = "demo") -> MotionClip:
    """Shuffling gait: antiphase hip swing, knee bounce, drifting base."""
    model = model or default_model()
    t, T = _times(duration, fps)
    ramp = np.minimum(1.0, t / 0.5)
    s = np.sin(2.0 * np.pi * freq * t) * ramp
    bounce = 0.5 * (1.0 - np.cos(4.0 * np.pi * freq * t)) * ramp
    q = np.tile(model.q_default, (T, 1))
    q[:, 0] += swing * s
    q[:, 2] += swing * s          # mirrored default makes this antiphase
    q[:, 1] -= 0.2 * bounce
    q[:, 3] += 0.2 * bounce
    q[:, 4] -= 0.5 * swing * s
    base_x = speed * (t - 0.25 * np.minimum(t, 0.5))  # soft start
    pitch = 0.05 * s
    return _assemble(base_x, pitch, q, fps, model, "walk shuffle", source_id)


def make_sway_clip(duration: float = 4.0, fps: float = 50.0, amp: float = 0.12,
                   freq: float = 0.6, model: RobotModel | None = None,
                   source_id: str = "demo") -> MotionClip:
    """Slow torso pitch sway with counter-swinging arm."""
    model = model or default_model()
    t, T = _times(duration, fps)
    ramp = np.minimum(1.0, t / 0.5)
    s = np.sin(2.0 * np.pi * freq * t) * ramp
    q = np.tile(model.q_default, (T, 1))
    q[:, 4] -= 2.0 * amp * s
    base_x = np.zeros(T)
    pitch = amp * s
    return _assemble(base_x, pitch, q, fps, model, "torso sway", source_id)


DEMO_CLIPS = {
    "squat": lambda model: make_squat_clip(model=model),
    "wave": lambda model: make_wave_clip(model=model),
    "walk": lambda model: make_walk_clip(model=model),
}


def write_demo_bank(out_dir: str, model: RobotModel | None = None) -> list[str]:
    """Write the deterministic three-clip demo bank; returns the file list."""
    model = model or default_model()
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, maker in DEMO_CLIPS.items():
        path = os.path.join(out_dir, f"{name}.mbank")
        write_clip(path, maker(model))
        paths.append(path)
    return paths
