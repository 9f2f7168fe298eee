"""Toy planar robot: a floating-base chain with 6 actuated joints.

The figure lives in the x-z plane (rotations about +y): a torso point
carrying two 2-segment legs (hip + knee each), one arm and one head link.
Point masses sit at the torso and at each link tip. Seven tracked bodies:

    0 torso (anchor)   1 l_knee   2 l_foot   3 r_knee   4 r_foot
    5 hand             6 head

Generalized coordinates are Q = (x, z, pitch, q0..q5). Link directions are
measured from straight down, so d(a) = (-sin a, -cos a); the head link
points up. All world-frame outputs embed into 3-D with y = 0 and rotations
as quaternions about +y, keeping the bank/reward stack fully 3-D.

PD gains follow the second-order-system parameterization Kp = J*wn^2,
Kd = 2*zeta*J*wn from the per-joint armature (reflected inertia), and
position actions are scaled by dq_max = 0.25 * tau_max / Kp per joint so a
full-scale action implies at most a quarter of the torque limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonPositiveParam

NQ = 9  # x, z, pitch, 6 joints
NUM_BODIES = 7

JOINT_NAMES = ("l_hip", "l_knee", "r_hip", "r_knee", "shoulder", "neck")
BODY_NAMES = ("torso", "l_knee", "l_foot", "r_knee", "r_foot", "hand", "head")


def derive_gains(armature, omega_n: float, zeta: float):
    """PD gains from desired closed-loop natural frequency and damping ratio."""
    J = np.asarray(armature, dtype=np.float64)
    if np.any(J <= 0) or omega_n <= 0 or zeta <= 0:
        raise NonPositiveParam("armature, omega_n and zeta must all be > 0")
    kp = J * omega_n**2
    kd = 2.0 * zeta * J * omega_n
    return kp, kd


@dataclass
class RobotModel:
    """Joint limits, actuation constants and geometry of the toy chain."""

    armature: np.ndarray          # (6,) reflected inertia per joint, kg m^2
    tau_max: np.ndarray           # (6,) effort limit, N m
    vel_max: np.ndarray           # (6,) joint velocity limit, rad/s
    q_min: np.ndarray             # (6,) rad
    q_max: np.ndarray             # (6,) rad
    q_default: np.ndarray         # (6,) rad
    omega_n: float                # rad/s
    zeta: float
    body_mass: np.ndarray         # (7,) kg, point masses at the body sites
    base_inertia: float           # kg m^2, pitch inertia of the torso
    thigh_len: float = 0.4
    shin_len: float = 0.4
    arm_len: float = 0.35
    head_len: float = 0.18
    hip_offset: float = 0.2       # torso point to hip attachment, along -body z
    top_offset: float = 0.25      # torso point to shoulder/neck attachment

    kp: np.ndarray = field(init=False)
    kd: np.ndarray = field(init=False)

    anchor_body: int = 0
    feet: tuple[int, ...] = (2, 4)
    hands: tuple[int, ...] = (5,)
    head: tuple[int, ...] = (6,)

    def __post_init__(self):
        self.kp, self.kd = derive_gains(self.armature, self.omega_n, self.zeta)

    @property
    def dof(self) -> int:
        return 6

    @property
    def num_bodies(self) -> int:
        return NUM_BODIES

    @property
    def end_effectors(self) -> tuple[int, ...]:
        return self.feet + self.hands

    @property
    def vr_bodies(self) -> tuple[int, ...]:
        return self.head + self.hands

    @property
    def upper_bodies(self) -> tuple[int, ...]:
        return (0, 5, 6)

    @property
    def lower_bodies(self) -> tuple[int, ...]:
        return (1, 2, 3, 4)

    @property
    def contact_penalized(self) -> tuple[int, ...]:
        """Bodies whose ground contact counts as undesired (not feet/hands)."""
        return tuple(b for b in range(NUM_BODIES) if b not in self.feet + self.hands)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.body_mass))

    @property
    def dq_max(self) -> np.ndarray:
        """Per-joint action-to-target scale: 0.25 * tau_max / Kp."""
        return 0.25 * self.tau_max / self.kp

    def mass_diag(self) -> np.ndarray:
        """Constant diagonal generalized mass matrix (decoupled inertia)."""
        return np.concatenate(
            [[self.total_mass, self.total_mass, self.base_inertia], self.armature]
        )


def default_model() -> RobotModel:
    return RobotModel(
        armature=np.array([0.08, 0.05, 0.08, 0.05, 0.03, 0.02]),
        tau_max=np.array([150.0, 100.0, 150.0, 100.0, 40.0, 25.0]),
        vel_max=np.full(6, 20.0),
        q_min=np.array([-1.8, -2.2, -1.8, -2.2, -2.5, -1.0]),
        q_max=np.array([1.8, 2.2, 1.8, 2.2, 2.5, 1.0]),
        q_default=np.array([0.5, -0.4, -0.5, 0.4, 0.3, 0.0]),
        omega_n=2.0 * np.pi * 10.0,
        zeta=2.0,
        body_mass=np.array([6.0, 0.5, 0.3, 0.5, 0.3, 0.25, 0.4]),
        base_inertia=0.8,
    )


def pd_torque(q_des, q, qd_des, qd, model: RobotModel):
    """Joint-space PD law with effort saturation.

    Returns (torque, saturated) where `saturated` marks joints whose raw PD
    torque exceeded the effort limit.
    """
    q_des, q, qd_des, qd = (np.asarray(a, dtype=np.float64) for a in (q_des, q, qd_des, qd))
    for a in (q_des, q, qd_des, qd):
        if a.shape[-1] != model.dof:
            raise DimensionMismatch(f"expected trailing dim {model.dof}, got {a.shape}")
    raw = model.kp * (q_des - q) + model.kd * (qd_des - qd)
    tau = np.clip(raw, -model.tau_max, model.tau_max)
    return tau, np.abs(raw) > model.tau_max


def action_to_target(action, model: RobotModel) -> np.ndarray:
    """Map a normalized action to joint position targets around the default pose."""
    action = np.asarray(action, dtype=np.float64)
    return model.q_default + action * model.dq_max


# ---------------------------------------------------------------------------
# Planar forward kinematics
# ---------------------------------------------------------------------------

# Which generalized coordinates drive each body's absolute link angle
# (pitch always participates). Row b gives the angular-velocity selection.
ANG_SEL = np.zeros((NUM_BODIES, NQ))
ANG_SEL[:, 2] = 1.0            # pitch drives every body
ANG_SEL[1, 3] = 1.0            # l_knee: l_hip
ANG_SEL[2, 3] = ANG_SEL[2, 4] = 1.0
ANG_SEL[3, 5] = 1.0            # r_knee: r_hip
ANG_SEL[4, 5] = ANG_SEL[4, 6] = 1.0
ANG_SEL[5, 7] = 1.0            # hand: shoulder
ANG_SEL[6, 8] = 1.0            # head: neck


def _dirs(a):
    """Unit direction of a link at absolute angle a (measured from straight down)."""
    return np.stack([-np.sin(a), -np.cos(a)], axis=-1)


def fk(base_pos, pitch, q, model: RobotModel):
    """Body positions (..., 7, 2) and absolute body angles (..., 7).

    base_pos: (..., 2) torso point; pitch: (...,); q: (..., 6).
    """
    base_pos = np.asarray(base_pos, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)

    a_lth = pitch + q[..., 0]
    a_lsh = a_lth + q[..., 1]
    a_rth = pitch + q[..., 2]
    a_rsh = a_rth + q[..., 3]
    a_arm = pitch + q[..., 4]
    a_hed = pitch + q[..., 5]

    hip = base_pos + model.hip_offset * _dirs(pitch)
    top = base_pos - model.top_offset * _dirs(pitch)

    l_knee = hip + model.thigh_len * _dirs(a_lth)
    l_foot = l_knee + model.shin_len * _dirs(a_lsh)
    r_knee = hip + model.thigh_len * _dirs(a_rth)
    r_foot = r_knee + model.shin_len * _dirs(a_rsh)
    hand = top + model.arm_len * _dirs(a_arm)
    head = top - model.head_len * _dirs(a_hed)

    pos = np.stack([base_pos, l_knee, l_foot, r_knee, r_foot, hand, head], axis=-2)
    ang = np.stack([pitch, a_lth, a_lsh, a_rth, a_rsh, a_arm, a_hed], axis=-1)
    return pos, ang


def jacobians(pitch, q, model: RobotModel):
    """d(body position)/dQ, shape (..., 7, 2, 9).

    Every body position is base + a sum of c * d(angle) segments, so the
    Jacobian columns are c * d'(angle) for each generalized coordinate that
    participates in the segment's angle.
    """
    pitch = np.asarray(pitch, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    batch = np.broadcast_shapes(pitch.shape, q.shape[:-1])
    J = np.zeros(batch + (NUM_BODIES, 2, NQ))
    J[..., :, 0, 0] = 1.0
    J[..., :, 1, 1] = 1.0

    def dd(a):
        # d'(a) = (-cos a, sin a)
        return np.stack([-np.cos(a), np.sin(a)], axis=-1)

    a_lth = pitch + q[..., 0]
    a_lsh = a_lth + q[..., 1]
    a_rth = pitch + q[..., 2]
    a_rsh = a_rth + q[..., 3]
    a_arm = pitch + q[..., 4]
    a_hed = pitch + q[..., 5]

    seg_hip = model.hip_offset * dd(pitch)
    seg_top = -model.top_offset * dd(pitch)
    seg_lth = model.thigh_len * dd(a_lth)
    seg_lsh = model.shin_len * dd(a_lsh)
    seg_rth = model.thigh_len * dd(a_rth)
    seg_rsh = model.shin_len * dd(a_rsh)
    seg_arm = model.arm_len * dd(a_arm)
    seg_hed = -model.head_len * dd(a_hed)

    # (body, segment, coordinate columns the segment's angle depends on)
    # l_knee = base + hip(pitch) + thigh(pitch,q0)
    J[..., 1, :, 2] = seg_hip + seg_lth
    J[..., 1, :, 3] = seg_lth
    # l_foot adds shin(pitch,q0,q1)
    J[..., 2, :, 2] = seg_hip + seg_lth + seg_lsh
    J[..., 2, :, 3] = seg_lth + seg_lsh
    J[..., 2, :, 4] = seg_lsh
    # right leg
    J[..., 3, :, 2] = seg_hip + seg_rth
    J[..., 3, :, 5] = seg_rth
    J[..., 4, :, 2] = seg_hip + seg_rth + seg_rsh
    J[..., 4, :, 5] = seg_rth + seg_rsh
    J[..., 4, :, 6] = seg_rsh
    # arm
    J[..., 5, :, 2] = seg_top + seg_arm
    J[..., 5, :, 7] = seg_arm
    # head
    J[..., 6, :, 2] = seg_top + seg_hed
    J[..., 6, :, 8] = seg_hed
    return J


def body_velocities(pitch, q, qdot, model: RobotModel):
    """Linear (..., 7, 2) and angular (..., 7) body velocities from Qdot."""
    J = jacobians(pitch, q, model)
    qdot = np.asarray(qdot, dtype=np.float64)
    lin = np.einsum("...bij,...j->...bi", J, qdot)
    ang = np.einsum("bj,...j->...b", ANG_SEL, qdot)
    return lin, ang
