"""Tracking / teleoperation reward stack.

Every tracking term squashes a squared error through the shared kernel
exp(-err / std^2), so values live in [0, 1] and the weighted sum at perfect
tracking equals the sum of positive weights (11.0 with the default spec).
Body terms average the squared error over their body set before the kernel.
Two body terms compare poses expressed in the anchor frame (drift-blind);
the teleoperation group compares world-frame quantities directly, which is
what penalizes global drift. Penalty terms are plain (negative-weight)
regularizers on contacts, action rate, joint limits, accelerations and
torques.

All evaluators broadcast over leading batch axes; a plain FrameState is the
unbatched case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from . import quat
from .errors import DimensionMismatch
from .robot import RobotModel


def exp_kernel(err_sq, std: float):
    """exp(-err / std^2): 1 at zero error, strictly decreasing."""
    if std <= 0:
        raise ValueError("kernel std must be > 0")
    return np.exp(-np.asarray(err_sq, dtype=np.float64) / (std * std))


def quat_distance(q1, q2, validate: bool = True):
    """Geodesic rotation angle; see quat.quat_distance."""
    return quat.quat_distance(q1, q2, validate=validate)


@dataclass
class FrameState:
    """One robot (or reference) state snapshot, world frame, batchable."""

    joint_pos: np.ndarray       # (..., J)
    joint_vel: np.ndarray       # (..., J)
    anchor_pos: np.ndarray      # (..., 3)
    anchor_quat: np.ndarray     # (..., 4)
    anchor_lin_vel: np.ndarray  # (..., 3)
    body_pos: np.ndarray        # (..., B, 3)
    body_quat: np.ndarray       # (..., B, 4)
    body_lin_vel: np.ndarray    # (..., B, 3)
    body_ang_vel: np.ndarray    # (..., B, 3)
    joint_acc: np.ndarray | None = None      # (..., J)
    joint_torque: np.ndarray | None = None   # (..., J)
    contact_forces: np.ndarray | None = None  # (..., B, 3)
    last_action: np.ndarray | None = None    # (..., J)
    action: np.ndarray | None = None         # (..., J)

    def zeros_like_dynamics(self) -> "FrameState":
        """Fill the dynamics-only fields with zeros (reference states)."""
        J = self.joint_pos.shape
        B3 = self.body_pos.shape
        if self.joint_acc is None:
            self.joint_acc = np.zeros(J)
        if self.joint_torque is None:
            self.joint_torque = np.zeros(J)
        if self.contact_forces is None:
            self.contact_forces = np.zeros(B3)
        if self.last_action is None:
            self.last_action = np.zeros(J)
        if self.action is None:
            self.action = np.zeros(J)
        return self


@dataclass
class RewardTerm:
    name: str
    weight: float
    std: float = 0.0            # kernel width; unused for penalties
    kind: str = "tracking"      # tracking | teleop | penalty
    params: dict = field(default_factory=dict)


@dataclass
class RewardBreakdown:
    terms: dict[str, np.ndarray]
    total: np.ndarray

    def scalar(self) -> "RewardBreakdown":
        return RewardBreakdown(
            {k: float(v) for k, v in self.terms.items()}, float(self.total)
        )


def default_reward_spec() -> list[RewardTerm]:
    """The shipped term table (weights/stds of the default configuration)."""
    t = RewardTerm
    return [
        t("track_anchor_pos", 0.5, 0.3),
        t("track_anchor_ori", 0.5, 0.4),
        t("track_body_pos_rel", 1.0, 0.3),
        t("track_body_ori_rel", 1.0, 0.4),
        t("track_body_lin_vel", 1.5, 1.0),
        t("track_body_ang_vel", 1.5, 3.14),
        t("track_anchor_lin_vel", 1.0, 1.0),
        t("teleop_body_pos", 1.0, 0.5, "teleop", {"w_upper": 0.5, "w_lower": 0.5}),
        t("teleop_vr_pos", 0.5, 0.5, "teleop"),
        t("teleop_feet_pos", 1.0, 0.5, "teleop"),
        t("teleop_body_ori", 0.5, 0.5, "teleop"),
        t("teleop_body_ang_vel", 0.5, 3.14, "teleop"),
        t("teleop_body_lin_vel", 0.5, 1.0, "teleop"),
        t("pen_contacts", -0.05, 0.0, "penalty", {"threshold": 1.0}),
        t("pen_action_rate", -0.1, 0.0, "penalty"),
        t("pen_joint_limit", -10.0, 0.0, "penalty"),
        t("pen_joint_acc", -2.5e-7, 0.0, "penalty"),
        t("pen_joint_torque", -1e-5, 0.0, "penalty"),
    ]


def positive_weight_sum(spec: list[RewardTerm]) -> float:
    return float(sum(term.weight for term in spec if term.weight > 0))


# ---------------------------------------------------------------------------
# Term evaluators
# ---------------------------------------------------------------------------

def _sq(v):
    return np.sum(np.square(v), axis=-1)


def _mean_body_pos_err(robot, ref, bodies):
    d = robot.body_pos[..., bodies, :] - ref.body_pos[..., bodies, :]
    return np.mean(_sq(d), axis=-1)


def _mean_body_vel_err(a, b, bodies):
    return np.mean(_sq(a[..., bodies, :] - b[..., bodies, :]), axis=-1)


def _mean_body_quat_err(robot, ref, bodies):
    d = quat_distance(
        robot.body_quat[..., bodies, :], ref.body_quat[..., bodies, :], validate=False
    )
    return np.mean(np.square(d), axis=-1)


def _to_anchor(state: FrameState):
    """Body poses expressed in the anchor frame."""
    inv = quat.quat_conj(state.anchor_quat)
    rel_pos = quat.rotate_vec(
        inv[..., None, :], state.body_pos - state.anchor_pos[..., None, :]
    )
    rel_quat = quat.quat_mul(
        np.broadcast_to(inv[..., None, :], state.body_quat.shape), state.body_quat
    )
    return rel_pos, rel_quat


def _eval_term(term: RewardTerm, robot: FrameState, ref: FrameState, model: RobotModel):
    name, std = term.name, term.std
    all_b = list(range(model.num_bodies))

    if name == "track_anchor_pos":
        return exp_kernel(_sq(robot.anchor_pos - ref.anchor_pos), std)
    if name == "track_anchor_ori":
        d = quat_distance(robot.anchor_quat, ref.anchor_quat, validate=False)
        return exp_kernel(np.square(d), std)
    if name == "track_body_pos_rel":
        rp, _ = _to_anchor(robot)
        gp, _ = _to_anchor(ref)
        return exp_kernel(np.mean(_sq(rp - gp), axis=-1), std)
    if name == "track_body_ori_rel":
        _, rq = _to_anchor(robot)
        _, gq = _to_anchor(ref)
        d = quat_distance(rq, gq, validate=False)
        return exp_kernel(np.mean(np.square(d), axis=-1), std)
    if name == "track_body_lin_vel":
        return exp_kernel(_mean_body_vel_err(robot.body_lin_vel, ref.body_lin_vel, all_b), std)
    if name == "track_body_ang_vel":
        return exp_kernel(_mean_body_vel_err(robot.body_ang_vel, ref.body_ang_vel, all_b), std)
    if name == "track_anchor_lin_vel":
        return exp_kernel(_sq(robot.anchor_lin_vel - ref.anchor_lin_vel), std)

    if name == "teleop_body_pos":
        wu = term.params.get("w_upper", 0.5)
        wl = term.params.get("w_lower", 0.5)
        err_u = _mean_body_pos_err(robot, ref, list(model.upper_bodies))
        err_l = _mean_body_pos_err(robot, ref, list(model.lower_bodies))
        return wu * exp_kernel(err_u, std) + wl * exp_kernel(err_l, std)
    if name == "teleop_vr_pos":
        return exp_kernel(_mean_body_pos_err(robot, ref, list(model.vr_bodies)), std)
    if name == "teleop_feet_pos":
        return exp_kernel(_mean_body_pos_err(robot, ref, list(model.feet)), std)
    if name == "teleop_body_ori":
        return exp_kernel(_mean_body_quat_err(robot, ref, all_b), std)
    if name == "teleop_body_ang_vel":
        return exp_kernel(_mean_body_vel_err(robot.body_ang_vel, ref.body_ang_vel, all_b), std)
    if name == "teleop_body_lin_vel":
        return exp_kernel(_mean_body_vel_err(robot.body_lin_vel, ref.body_lin_vel, all_b), std)

    if name == "pen_contacts":
        thr = term.params.get("threshold", 1.0)
        mag = np.linalg.norm(robot.contact_forces[..., list(model.contact_penalized), :], axis=-1)
        return np.sum(mag > thr, axis=-1).astype(np.float64)
    if name == "pen_action_rate":
        return _sq(robot.action - robot.last_action)
    if name == "pen_joint_limit":
        out = (robot.joint_pos < model.q_min) | (robot.joint_pos > model.q_max)
        return np.sum(out, axis=-1).astype(np.float64)
    if name == "pen_joint_acc":
        return _sq(robot.joint_acc)
    if name == "pen_joint_torque":
        return _sq(robot.joint_torque)

    raise KeyError(f"unknown reward term {name!r}")


def compute_rewards(
    robot: FrameState,
    ref: FrameState,
    spec: list[RewardTerm] | None = None,
    model: RobotModel | None = None,
) -> RewardBreakdown:
    """Evaluate every term of the spec on a robot/reference state pair."""
    from .robot import default_model

    model = model or default_model()
    spec = spec if spec is not None else default_reward_spec()
    if robot.joint_pos.shape[-1] != model.dof or robot.body_pos.shape[-2] != model.num_bodies:
        raise DimensionMismatch(
            f"state has {robot.joint_pos.shape[-1]} joints / "
            f"{robot.body_pos.shape[-2]} bodies; model wants "
            f"{model.dof} / {model.num_bodies}"
        )
    ref.zeros_like_dynamics()
    robot.zeros_like_dynamics()

    terms: dict[str, np.ndarray] = {}
    total = None
    for term in spec:
        value = _eval_term(term, robot, ref, model)
        terms[term.name] = value
        contrib = term.weight * value
        total = contrib if total is None else total + contrib
    return RewardBreakdown(terms, total)


# ---------------------------------------------------------------------------
# TOML (de)serialization of the term table
# ---------------------------------------------------------------------------

def spec_to_toml(spec: list[RewardTerm]) -> str:
    lines = []
    for term in spec:
        lines.append("[[term]]")
        lines.append(f'name = "{term.name}"')
        lines.append(f"weight = {term.weight!r}")
        lines.append(f"std = {term.std!r}")
        lines.append(f'kind = "{term.kind}"')
        for k, v in term.params.items():
            lines.append(f"{k} = {v!r}")
        lines.append("")
    return "\n".join(lines)


def spec_from_toml(text: str) -> list[RewardTerm]:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    data = tomllib.loads(text)
    spec = []
    for row in data.get("term", []):
        params = {
            k: v for k, v in row.items() if k not in ("name", "weight", "std", "kind")
        }
        spec.append(
            RewardTerm(row["name"], float(row["weight"]), float(row.get("std", 0.0)),
                       row.get("kind", "tracking"), params)
        )
    return spec
