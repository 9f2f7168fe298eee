"""Observation assembly for the tracking policies.

Actor: a 5-step history of the proprioceptive stack, each frame corrupted by
per-term uniform noise when enabled. Critic: the current noise-free proprio
frame plus privileged terms (anchor position error, body poses in the robot
frame, base and reference base linear velocity). The reference joint terms
come from the environment's observed stream, so a teleop interface shows the
policy its delayed/smoothed view while privileged terms stay true.

Proprio layout per frame (J joints):
    ref joint pos (J) | ref joint vel (J) | anchor ori error (1) |
    base ang vel (1) | joint pos (J) | joint vel (J) | last action (J)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import quat
from ..errors import HistoryUnderfull
from ..robot import RobotModel, fk

HISTORY_LEN = 5

# per-term uniform noise half-widths, applied to the actor stack only
NOISE_ANCHOR_ORI = 0.05
NOISE_BASE_ANG_VEL = 0.2
NOISE_JOINT_POS = 0.01
NOISE_JOINT_VEL = 0.5


@dataclass
class ObservationSpec:
    dof: int
    num_bodies: int
    history: int = HISTORY_LEN

    @property
    def proprio_dim(self) -> int:
        return 5 * self.dof + 2

    @property
    def priv_dim(self) -> int:
        # anchor pos err (2) + body pos (2B) + body ori (B) + base lin vel (2)
        # + ref base lin vel (2)
        return 3 * self.num_bodies + 6

    @property
    def actor_dim(self) -> int:
        return self.history * self.proprio_dim

    @property
    def critic_dim(self) -> int:
        return self.proprio_dim + self.priv_dim

    def noise_scale(self) -> np.ndarray:
        J = self.dof
        s = np.zeros(self.proprio_dim)
        s[2 * J] = NOISE_ANCHOR_ORI
        s[2 * J + 1] = NOISE_BASE_ANG_VEL
        s[2 * J + 2 : 3 * J + 2] = NOISE_JOINT_POS
        s[3 * J + 2 : 4 * J + 2] = NOISE_JOINT_VEL
        return s

    def spec_hash(self) -> str:
        return f"prop{self.proprio_dim}x{self.history}+priv{self.priv_dim}"


def build_observation(proprio_history: np.ndarray, proprio_now: np.ndarray,
                      privileged: np.ndarray, spec: ObservationSpec):
    """(actor_obs, critic_obs) from an already-assembled history stack.

    proprio_history: (E, history, P) noisy frames, newest last.
    proprio_now: (E, P) noise-free current frame (critic side).
    """
    if proprio_history.shape[1] != spec.history:
        raise HistoryUnderfull(
            f"history holds {proprio_history.shape[1]} frames, need {spec.history}"
        )
    E = proprio_history.shape[0]
    actor = proprio_history.reshape(E, -1)
    critic = np.concatenate([proprio_now, privileged], axis=-1)
    return actor, critic


def _rot_world_to_base(pitch, vec_xz):
    """Rotate world-frame planar vectors into the base frame."""
    c, s = np.cos(pitch), np.sin(pitch)
    x, z = vec_xz[..., 0], vec_xz[..., 1]
    # inverse of the planar rotation about +y: world (x,z) -> body frame
    return np.stack([c * x - s * z, s * x + c * z], axis=-1)


class ObservationBuilder:
    """Stateful per-environment observation assembly with history + noise."""

    def __init__(self, model: RobotModel, num_envs: int, noise: bool = False,
                 rng: np.random.Generator | None = None):
        self.model = model
        self.spec = ObservationSpec(model.dof, model.num_bodies)
        self.noise = noise
        self.rng = rng or np.random.default_rng(0)
        self.hist = np.zeros((num_envs, self.spec.history, self.spec.proprio_dim))
        self._filled = False

    def _proprio(self, env):
        ref_jp, ref_jv, ref_quat = env.observed_reference()
        pitch = env.Q[:, 2]
        ref_pitch = quat.angle_about_y(ref_quat)
        ori_err = quat.wrap_angle(ref_pitch - pitch)
        return np.concatenate(
            [
                ref_jp,
                ref_jv,
                ori_err[:, None],
                env.Qd[:, 2:3],
                env.Q[:, 3:],
                env.Qd[:, 3:],
                env.last_action,
            ],
            axis=-1,
        )

    def _privileged(self, env):
        ref = env.reference_state(lookahead=1)
        base_xz = env.Q[:, :2]
        pitch = env.Q[:, 2]
        ref_xz = ref.anchor_pos[:, [0, 2]]
        pos_err = _rot_world_to_base(pitch, ref_xz - base_xz)
        body_pos, body_ang = fk(base_xz, pitch, env.Q[:, 3:], self.model)
        body_rel = _rot_world_to_base(pitch[:, None], body_pos - base_xz[:, None, :])
        body_ori_rel = quat.wrap_angle(body_ang - pitch[:, None])
        E = env.num_envs
        return np.concatenate(
            [
                pos_err,
                body_rel.reshape(E, -1),
                body_ori_rel,
                env.Qd[:, :2],
                ref.anchor_lin_vel[:, [0, 2]],
            ],
            axis=-1,
        )

    def reset(self, env, env_ids=None) -> None:
        """Seed the history with the current frame (repeated)."""
        frame = self._proprio(env)
        if self.noise:
            frame = frame + self.rng.uniform(-1.0, 1.0, frame.shape) * self.spec.noise_scale()
        ids = np.arange(env.num_envs) if env_ids is None else np.asarray(env_ids)
        self.hist[ids] = frame[ids][:, None, :]
        self._filled = True

    def observe(self, env):
        """Push the current frame into the history; return (actor, critic)."""
        if not self._filled:
            raise HistoryUnderfull("reset() the builder before observing")
        clean = self._proprio(env)
        noisy = clean
        if self.noise:
            noisy = clean + self.rng.uniform(-1.0, 1.0, clean.shape) * self.spec.noise_scale()
        self.hist = np.roll(self.hist, -1, axis=1)
        self.hist[:, -1, :] = noisy
        return build_observation(self.hist, clean, self._privileged(env), self.spec)

    def actor_obs(self, env) -> np.ndarray:
        return self.observe(env)[0]
