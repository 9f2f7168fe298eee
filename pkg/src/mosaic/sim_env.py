"""Planar tracking environment around the toy chain.

Dynamics are a decoupled-inertia Lagrangian system: the generalized mass
matrix is constant and diagonal (total mass on base translation, a lumped
pitch inertia, per-joint reflected armature), while gravity and ground
contact act through the exact point-mass forward kinematics (Jacobian
transpose), so the model has a well-defined mechanical energy. Integration
is semi-implicit Euler with a fixed number of substeps per 50 Hz control
tick; the PD law is re-evaluated each substep with its damping handled
implicitly (see _integrate). Ground contact is a unilateral spring with an
implicit normal damper and a friction-scaled tangential damper.

Each control tick: scale the action to joint targets, integrate under the
saturated PD actuator, advance the reference frame by one, evaluate the
reward stack, and check terminations in fixed order (vertical anchor
error, anchor orientation error, end-effector vertical error, motion end,
timeout).

The environment is batched over E independent instances; identical seeds
and configs give bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import EnvNotReset
from .motion_bank import MotionBank, global_index
from .rewards import FrameState, RewardTerm, compute_rewards, default_reward_spec
from .robot import (
    RobotModel,
    body_velocities,
    default_model,
    fk,
    jacobians,
)

GRAVITY = 9.81

TERM_ANCHOR_POS = "anchor_pos_error"
TERM_ANCHOR_ORI = "anchor_ori_error"
TERM_EE_POS = "ee_pos_error"
TERM_MOTION_END = "motion_end"
TERM_TIME_OUT = "time_out"
SUCCESS_TERMS = (TERM_MOTION_END, TERM_TIME_OUT)


@dataclass
class EnvConfig:
    dt: float = 0.02                 # control step (50 Hz)
    substeps: int = 4
    max_episode_steps: int = 500
    anchor_z_threshold: float = 0.25   # m
    anchor_ori_threshold: float = 0.8  # rad
    ee_z_threshold: float = 0.25       # m
    contact_stiffness: float = 2.0e4   # N/m
    contact_damping: float = 400.0     # N s/m
    contact_viscous_mu: float = 60.0   # N s/m, tangential viscous gain
    randomize: bool = False
    friction_static_range: tuple[float, float] = (0.3, 1.6)
    friction_dynamic_range: tuple[float, float] = (0.3, 1.2)
    restitution_range: tuple[float, float] = (0.0, 0.5)
    default_pos_jitter: float = 0.01   # rad
    com_offset_x: float = 0.025        # m
    com_offset_z: float = 0.05         # m
    push_interval_range: tuple[float, float] = (1.0, 3.0)  # s
    push_vel: float = 0.4              # m/s, per-component uniform bound

    def validate(self) -> "EnvConfig":
        if self.dt <= 0 or self.substeps < 1:
            raise ValueError("dt must be > 0 and substeps >= 1")
        for name in ("anchor_z_threshold", "anchor_ori_threshold", "ee_z_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        return self


@dataclass
class Metrics:
    E_AP: float
    E_AV: float
    E_BP: float
    E_BV: float
    E_EP: float
    success_rate: float
    avg_steps: float

    CSV_HEADER = "E_AP,E_AV,E_BP,E_BV,E_EP,success_rate,avg_steps"

    def csv_row(self) -> str:
        return ",".join(
            format(v, ".9g")
            for v in (self.E_AP, self.E_AV, self.E_BP, self.E_BV, self.E_EP,
                      self.success_rate, self.avg_steps)
        )


class OraclePolicy:
    """Sentinel policy: the env teleports the robot onto the reference."""


@dataclass
class StreamedReference:
    """Reference arrays the policy observes, aligned with the bank rows.

    For a clean interface these are the bank's own joint fields; a teleop
    interface substitutes its delayed / smoothed view here while rewards,
    terminations and metrics keep using the true reference.
    """

    joint_pos: np.ndarray    # (rows, J)
    joint_vel: np.ndarray    # (rows, J)
    anchor_quat: np.ndarray  # (rows, 4)


class TrackingEnv:
    """Vectorized toy tracking environment."""

    def __init__(
        self,
        bank: MotionBank,
        num_envs: int = 1,
        model: RobotModel | None = None,
        cfg: EnvConfig | None = None,
        reward_spec: list[RewardTerm] | None = None,
        seed: int = 0,
        obs_stream: StreamedReference | None = None,
        auto_reset: bool = False,
    ):
        self.bank = bank
        self.model = model or default_model()
        self.cfg = (cfg or EnvConfig()).validate()
        self.reward_spec = reward_spec if reward_spec is not None else default_reward_spec()
        self.num_envs = num_envs
        self.rng = np.random.default_rng(seed)
        self.auto_reset = auto_reset
        self.reset_sampler = None  # fn(ids) -> (motions, frames) for auto-reset

        if obs_stream is None:
            obs_stream = StreamedReference(
                joint_pos=bank.joint_pos,
                joint_vel=bank.joint_vel,
                anchor_quat=bank.body_quat_w[:, self.model.anchor_body, :],
            )
        self.obs_stream = obs_stream

        E = num_envs
        self.Q = np.zeros((E, 9))
        self.Qd = np.zeros((E, 9))
        self.motion = np.zeros(E, dtype=np.int64)
        self.t_ref = np.zeros(E, dtype=np.int64)
        self.start_frame = np.zeros(E, dtype=np.int64)
        self.ep_steps = np.zeros(E, dtype=np.int64)
        self.done = np.ones(E, dtype=bool)
        self.last_action = np.zeros((E, self.model.dof))
        self.action = np.zeros((E, self.model.dof))
        self.tau = np.zeros((E, self.model.dof))
        self.joint_acc = np.zeros((E, self.model.dof))
        self.contact_f = np.zeros((E, self.model.num_bodies, 2))
        self.sim_time = np.zeros(E)

        # per-env randomization state (identity values when disabled)
        self.mu_static = np.full(E, 1.0)
        self.mu_dynamic = np.full(E, 0.8)
        self.restitution = np.zeros(E)
        self.q_default = np.tile(self.model.q_default, (E, 1))
        self.com_offset = np.zeros((E, 2))
        self.next_push = np.full(E, np.inf)

        self._was_reset = False

    # ------------------------------------------------------------------
    # Reset & randomization
    # ------------------------------------------------------------------

    def reset(self, motions=None, frames=None, env_ids=None) -> None:
        """Place selected envs on their reference state at the start frame."""
        ids = np.arange(self.num_envs) if env_ids is None else np.asarray(env_ids)
        if len(ids) == 0:
            return
        motions = np.zeros(len(ids), dtype=np.int64) if motions is None else np.asarray(motions)
        frames = np.zeros(len(ids), dtype=np.int64) if frames is None else np.asarray(frames)

        rows = global_index(self.bank, motions, frames)
        anchor = self.model.anchor_body
        pos = self.bank.body_pos_w[rows, anchor, :].astype(np.float64)
        quat_a = self.bank.body_quat_w[rows, anchor, :].astype(np.float64)
        lin = self.bank.body_lin_vel_w[rows, anchor, :].astype(np.float64)
        ang = self.bank.body_ang_vel_w[rows, anchor, :].astype(np.float64)

        self.Q[ids, 0] = pos[:, 0]
        self.Q[ids, 1] = pos[:, 2]
        self.Q[ids, 2] = quat.angle_about_y(quat_a)
        self.Q[ids, 3:] = self.bank.joint_pos[rows].astype(np.float64)
        self.Qd[ids, 0] = lin[:, 0]
        self.Qd[ids, 1] = lin[:, 2]
        self.Qd[ids, 2] = ang[:, 1]
        self.Qd[ids, 3:] = self.bank.joint_vel[rows].astype(np.float64)

        self.motion[ids] = motions
        self.t_ref[ids] = frames
        self.start_frame[ids] = frames
        self.ep_steps[ids] = 0
        self.done[ids] = False
        self.last_action[ids] = 0.0
        self.action[ids] = 0.0
        self.tau[ids] = 0.0
        self.joint_acc[ids] = 0.0
        self.contact_f[ids] = 0.0
        self.sim_time[ids] = 0.0

        if self.cfg.randomize:
            self._randomize_ids(ids)
        self._was_reset = True

    def _randomize_ids(self, ids) -> None:
        cfg, rng, n = self.cfg, self.rng, len(ids)
        self.mu_static[ids] = rng.uniform(*cfg.friction_static_range, size=n)
        self.mu_dynamic[ids] = rng.uniform(*cfg.friction_dynamic_range, size=n)
        self.restitution[ids] = rng.uniform(*cfg.restitution_range, size=n)
        self.q_default[ids] = self.model.q_default + rng.uniform(
            -cfg.default_pos_jitter, cfg.default_pos_jitter, size=(n, self.model.dof)
        )
        self.com_offset[ids, 0] = rng.uniform(-cfg.com_offset_x, cfg.com_offset_x, size=n)
        self.com_offset[ids, 1] = rng.uniform(-cfg.com_offset_z, cfg.com_offset_z, size=n)
        self.next_push[ids] = rng.uniform(*cfg.push_interval_range, size=n)
        # perturb the reset joint pose with the same default-pos jitter
        self.Q[ids, 3:] += self.q_default[ids] - self.model.q_default

    # ------------------------------------------------------------------
    # Dynamics
    # ------------------------------------------------------------------

    def _integrate(self, q_des) -> np.ndarray:
        """Semi-implicit substeps with implicit velocity-proportional forces.

        Position-dependent forces (gravity, contact springs, the PD position
        term) enter explicitly; every damping term (PD Kd, contact normal
        damper, tangential viscous friction) is folded into a configuration-
        dependent matrix D and the velocity update solves
        (M + h D) v' = M v + h F, which stays stable for stiff dampers on
        light joints — the implicit-actuator treatment. The PD law is
        re-evaluated each substep; saturated joints apply the clamped
        constant torque instead. Returns the mean applied joint torque.
        """
        m = self.model
        cfg = self.cfg
        h = cfg.dt / cfg.substeps
        E = self.num_envs
        M_diag = m.mass_diag()
        eye = np.eye(9)
        tau_accum = np.zeros((E, m.dof))
        self._saturated = np.zeros((E, m.dof), dtype=bool)

        for _ in range(cfg.substeps):
            base = self.Q[:, :2]
            pitch = self.Q[:, 2]
            qj = self.Q[:, 3:]
            J = jacobians(pitch, qj, m)              # (E, B, 2, 9)
            pos, _ = fk(base, pitch, qj, m)          # (E, B, 2)

            force = np.zeros_like(self.Q)
            # gravity on every point mass through the z-row of its Jacobian
            force -= GRAVITY * np.einsum("b,ebj->ej", m.body_mass, J[:, :, 1, :])
            # torso CoM offset: its world z is -off_x*sin(pitch)+off_z*cos(pitch)
            # above the base, adding a gravity moment about pitch
            c, s = np.cos(pitch), np.sin(pitch)
            off_x, off_z = self.com_offset[:, 0], self.com_offset[:, 1]
            force[:, 2] -= GRAVITY * m.body_mass[0] * (-off_x * c - off_z * s)

            # unilateral contact springs (normal direction only)
            pen = np.maximum(0.0, -pos[..., 1])
            active = pen > 0.0
            f_spring = cfg.contact_stiffness * pen
            force += np.einsum("ebij,ebi->ej", J,
                               np.stack([np.zeros_like(f_spring), f_spring], axis=-1))

            # PD: explicit position spring, implicit damping, clamped torque
            # where the estimate saturates
            err = q_des - qj
            tau_est = m.kp * err - m.kd * self.Qd[:, 3:]
            sat = np.abs(tau_est) > m.tau_max
            self._saturated |= sat
            force[:, 3:] += np.where(sat, np.sign(tau_est) * m.tau_max, m.kp * err)

            # damping matrix D = sum_b J_b^T diag(c_t, d_n) J_b + PD Kd
            d_n = active * (cfg.contact_damping * (1.0 - self.restitution)[:, None])
            c_t = active * (cfg.contact_viscous_mu * self.mu_dynamic[:, None])
            coefs = np.stack([c_t, d_n], axis=-1)    # (E, B, 2)
            D = np.einsum("ebaj,eba,ebak->ejk", J, coefs, J)
            kd_eff = m.kd * (~sat)
            D[:, range(3, 9), range(3, 9)] += kd_eff

            A = M_diag[None, :, None] * eye[None] + h * D
            rhs = M_diag * self.Qd + h * force
            v_new = np.linalg.solve(A, rhs[..., None])[..., 0]
            v_new[:, 3:] = np.clip(v_new[:, 3:], -m.vel_max, m.vel_max)
            self.Qd = v_new
            self.Q = self.Q + h * v_new

            tau_step = np.where(sat, np.sign(tau_est) * m.tau_max,
                                m.kp * err - m.kd * v_new[:, 3:])
            tau_accum += np.clip(tau_step, -m.tau_max, m.tau_max)

            # contact forces at post-solve velocities, for penalties/rewards
            vel = np.einsum("ebij,ej->ebi", J, v_new)
            fz = np.where(active, np.maximum(0.0, f_spring - d_n * vel[..., 1]), 0.0)
            fx = -c_t * vel[..., 0]
            self.contact_f = np.stack([fx, fz], axis=-1)

        return tau_accum / cfg.substeps

    def mechanical_energy(self, q_des=None) -> np.ndarray:
        """Kinetic + gravitational + contact-spring (+ PD-spring) energy."""
        m = self.model
        ke = 0.5 * np.sum(self.model.mass_diag() * self.Qd**2, axis=-1)
        pos, _ = fk(self.Q[:, :2], self.Q[:, 2], self.Q[:, 3:], m)
        pe = GRAVITY * np.einsum("b,eb->e", m.body_mass, pos[..., 1])
        pitch = self.Q[:, 2]
        c, s = np.cos(pitch), np.sin(pitch)
        z_off = -self.com_offset[:, 0] * s + self.com_offset[:, 1] * c
        pe += GRAVITY * m.body_mass[0] * z_off
        pen = np.maximum(0.0, -pos[..., 1])
        pe += 0.5 * self.cfg.contact_stiffness * np.sum(pen**2, axis=-1)
        if q_des is not None:
            pe += 0.5 * np.sum(m.kp * (q_des - self.Q[:, 3:]) ** 2, axis=-1)
        return ke + pe

    # ------------------------------------------------------------------
    # Reference access
    # ------------------------------------------------------------------

    def _ref_rows(self, lookahead: int = 0):
        return global_index(self.bank, self.motion, self.t_ref + lookahead)

    def reference_state(self, lookahead: int = 0) -> FrameState:
        """True reference FrameState at the current per-env frames."""
        rows = self._ref_rows(lookahead)
        b = self.bank
        a = self.model.anchor_body
        return FrameState(
            joint_pos=b.joint_pos[rows].astype(np.float64),
            joint_vel=b.joint_vel[rows].astype(np.float64),
            anchor_pos=b.body_pos_w[rows, a, :].astype(np.float64),
            anchor_quat=b.body_quat_w[rows, a, :].astype(np.float64),
            anchor_lin_vel=b.body_lin_vel_w[rows, a, :].astype(np.float64),
            body_pos=b.body_pos_w[rows].astype(np.float64),
            body_quat=b.body_quat_w[rows].astype(np.float64),
            body_lin_vel=b.body_lin_vel_w[rows].astype(np.float64),
            body_ang_vel=b.body_ang_vel_w[rows].astype(np.float64),
        ).zeros_like_dynamics()

    def observed_reference(self):
        """(joint_pos, joint_vel, anchor_quat) the policy sees this tick.

        One-step lookahead: before stepping, the policy is shown the frame
        it is being steered toward (the frame the next tick scores against).
        """
        rows = self._ref_rows(lookahead=1)
        s = self.obs_stream
        return (
            s.joint_pos[rows].astype(np.float64),
            s.joint_vel[rows].astype(np.float64),
            s.anchor_quat[rows].astype(np.float64),
        )

    def robot_state(self) -> FrameState:
        """Current robot FrameState (world 3-D embedding of the planar state)."""
        m = self.model
        base = self.Q[:, :2]
        pitch = self.Q[:, 2]
        qj = self.Q[:, 3:]
        pos2, ang = fk(base, pitch, qj, m)
        lin2, angv = body_velocities(pitch, qj, self.Qd, m)

        def embed(v2):
            out = np.zeros(v2.shape[:-1] + (3,))
            out[..., 0] = v2[..., 0]
            out[..., 2] = v2[..., 1]
            return out

        body_pos = embed(pos2)
        body_lin = embed(lin2)
        body_ang = np.zeros(angv.shape + (3,))
        body_ang[..., 1] = angv
        contact3 = embed(self.contact_f)
        return FrameState(
            joint_pos=qj.copy(),
            joint_vel=self.Qd[:, 3:].copy(),
            anchor_pos=body_pos[:, m.anchor_body, :],
            anchor_quat=quat.quat_about_y(ang[:, m.anchor_body]),
            anchor_lin_vel=body_lin[:, m.anchor_body, :],
            body_pos=body_pos,
            body_quat=quat.quat_about_y(ang),
            body_lin_vel=body_lin,
            body_ang_vel=body_ang,
            joint_acc=self.joint_acc.copy(),
            joint_torque=self.tau.copy(),
            contact_forces=contact3,
            last_action=self.last_action.copy(),
            action=self.action.copy(),
        )

    # ------------------------------------------------------------------
    # Stepping
    # ------------------------------------------------------------------

    def _check_terminations(self, robot: FrameState, ref: FrameState):
        m = self.model
        reasons = np.full(self.num_envs, "", dtype=object)
        dz = np.abs(robot.anchor_pos[:, 2] - ref.anchor_pos[:, 2])
        ori = quat.quat_distance(robot.anchor_quat, ref.anchor_quat, validate=False)
        ee = list(m.end_effectors)
        dz_ee = np.max(
            np.abs(robot.body_pos[:, ee, 2] - ref.body_pos[:, ee, 2]), axis=-1
        )
        at_end = self.t_ref >= self.bank.lengths[self.motion] - 1
        timeout = self.ep_steps >= self.cfg.max_episode_steps

        # fixed precedence: error terminations, then motion end, then timeout
        for mask, name in (
            (dz > self.cfg.anchor_z_threshold, TERM_ANCHOR_POS),
            (ori > self.cfg.anchor_ori_threshold, TERM_ANCHOR_ORI),
            (dz_ee > self.cfg.ee_z_threshold, TERM_EE_POS),
            (at_end, TERM_MOTION_END),
            (timeout, TERM_TIME_OUT),
        ):
            fresh = mask & (reasons == "")
            reasons[fresh] = name
        return reasons

    def step(self, actions):
        """Advance one control tick. Returns (reward_breakdown, done, info).

        With auto_reset the done environments are re-seeded at the end of the
        tick (after the returned info snapshot), so the next observation
        already sees their fresh episode; info["reset_ids"] names them.
        """
        if not self._was_reset:
            raise EnvNotReset("call reset() before step()")
        if np.all(self.done):
            raise EnvNotReset("all environments terminated; reset() them first")

        actions = np.asarray(actions, dtype=np.float64).reshape(self.num_envs, -1)
        self.last_action = self.action
        self.action = actions

        # scheduled base pushes
        if self.cfg.randomize:
            due = self.sim_time >= self.next_push
            if np.any(due):
                n = int(np.sum(due))
                self.Qd[due, 0] += self.rng.uniform(-self.cfg.push_vel, self.cfg.push_vel, n)
                self.Qd[due, 1] += self.rng.uniform(-self.cfg.push_vel, self.cfg.push_vel, n)
                self.next_push[due] = self.sim_time[due] + self.rng.uniform(
                    *self.cfg.push_interval_range, size=n
                )

        q_des = self.q_default + actions * self.model.dq_max
        qd_prev = self.Qd[:, 3:].copy()
        self.tau = self._integrate(q_des)
        saturated = self._saturated
        self.joint_acc = (self.Qd[:, 3:] - qd_prev) / self.cfg.dt
        self.sim_time += self.cfg.dt

        self.t_ref += 1
        self.ep_steps += 1

        robot = self.robot_state()
        ref = self.reference_state()
        breakdown = compute_rewards(robot, ref, self.reward_spec, self.model)
        reasons = self._check_terminations(robot, ref)
        newly_done = reasons != ""
        self.done = newly_done.copy()
        info = {
            "termination": reasons,
            "saturated": saturated,
            "robot": robot,
            "ref": ref,
            "reset_ids": np.zeros(0, dtype=np.int64),
        }
        if self.auto_reset and np.any(newly_done):
            ids = np.nonzero(newly_done)[0]
            if self.reset_sampler is not None:
                motions, frames = self.reset_sampler(ids)
            else:
                motions = self.motion[ids]
                frames = np.zeros(len(ids), dtype=np.int64)
            self.reset(motions, frames, env_ids=ids)
            info["reset_ids"] = ids
        return breakdown, newly_done.copy(), info


def randomize(env: TrackingEnv, rng: np.random.Generator | None = None) -> TrackingEnv:
    """Redraw startup randomization for all envs (no-op when disabled)."""
    if not env.cfg.randomize:
        return env
    if rng is not None:
        env.rng = rng
    env._randomize_ids(np.arange(env.num_envs))
    return env


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate(
    policy,
    bank: MotionBank,
    env_cfg: EnvConfig | None = None,
    episodes: int = 8,
    model: RobotModel | None = None,
    reward_spec: list[RewardTerm] | None = None,
    seed: int = 0,
    obs_stream: StreamedReference | None = None,
    obs_builder=None,
    start_frames=None,
) -> Metrics:
    """Roll `episodes` episodes over the bank's motions and pool the metrics.

    `policy` is a callable on actor observations (needs `obs_builder` to
    assemble them), an OraclePolicy (teleports onto the reference), or a
    zero-action fallback when None. Episode e tracks motion e mod M from
    frame 0 (or `start_frames[e]`). Reduction order is fixed, so equal seeds
    give identical metrics.
    """
    model = model or default_model()
    env_cfg = env_cfg or EnvConfig()
    oracle = isinstance(policy, OraclePolicy)

    errs = {"ap": [], "av": [], "bp": [], "bv": [], "ep": []}
    successes = 0
    steps_per_ep = []

    for e in range(episodes):
        m = e % bank.motion_count
        f = 0 if start_frames is None else int(start_frames[e])
        env = TrackingEnv(
            bank, 1, model, env_cfg, reward_spec, seed=seed + e, obs_stream=obs_stream
        )
        env.reset(np.array([m]), np.array([f]))
        if obs_builder is not None:
            obs_builder.reset(env)
        ee = list(model.end_effectors)
        while True:
            if oracle:
                ref = env.reference_state()
                _teleport_to_ref(env, ref)
                robot = ref
                env.t_ref += 1
                env.ep_steps += 1
                reasons = env._check_terminations(robot, ref)
                done = reasons != ""
            else:
                if policy is None:
                    act = np.zeros((1, model.dof))
                else:
                    act = policy(obs_builder.actor_obs(env))
                _, done, info = env.step(act)
                robot, ref = info["robot"], info["ref"]
                reasons = info["termination"]
            errs["ap"].append(np.linalg.norm(robot.anchor_pos - ref.anchor_pos, axis=-1))
            errs["av"].append(np.linalg.norm(robot.anchor_lin_vel - ref.anchor_lin_vel, axis=-1))
            errs["bp"].append(
                np.mean(np.linalg.norm(robot.body_pos - ref.body_pos, axis=-1), axis=-1)
            )
            errs["bv"].append(
                np.mean(np.linalg.norm(robot.body_lin_vel - ref.body_lin_vel, axis=-1), axis=-1)
            )
            errs["ep"].append(
                np.mean(
                    np.linalg.norm(
                        robot.body_pos[:, ee, :] - ref.body_pos[:, ee, :], axis=-1
                    ),
                    axis=-1,
                )
            )
            if done[0]:
                steps_per_ep.append(int(env.ep_steps[0]))
                if reasons[0] in SUCCESS_TERMS:
                    successes += 1
                break

    return Metrics(
        E_AP=float(np.mean(np.concatenate(errs["ap"]))),
        E_AV=float(np.mean(np.concatenate(errs["av"]))),
        E_BP=float(np.mean(np.concatenate(errs["bp"]))),
        E_BV=float(np.mean(np.concatenate(errs["bv"]))),
        E_EP=float(np.mean(np.concatenate(errs["ep"]))),
        success_rate=successes / episodes,
        avg_steps=float(np.mean(steps_per_ep)),
    )


def _teleport_to_ref(env: TrackingEnv, ref: FrameState) -> None:
    a = env.model.anchor_body
    env.Q[:, 0] = ref.anchor_pos[:, 0]
    env.Q[:, 1] = ref.anchor_pos[:, 2]
    env.Q[:, 2] = quat.angle_about_y(ref.anchor_quat)
    env.Q[:, 3:] = ref.joint_pos
    env.Qd[:, 0] = ref.anchor_lin_vel[:, 0]
    env.Qd[:, 1] = ref.anchor_lin_vel[:, 2]
    env.Qd[:, 2] = ref.body_ang_vel[:, a, 1]
    env.Qd[:, 3:] = ref.joint_vel
