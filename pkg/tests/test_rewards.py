import math

import numpy as np
import pytest

from mosaic import quat
from mosaic.errors import DimensionMismatch, NonUnitQuaternion
from mosaic.rewards import (
    FrameState,
    compute_rewards,
    default_reward_spec,
    exp_kernel,
    positive_weight_sum,
    quat_distance,
    spec_from_toml,
    spec_to_toml,
)


def rand_quat(rng, shape=()):
    q = rng.normal(size=shape + (4,))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def random_state(rng, model, perfect_of=None):
    """A random FrameState; with perfect_of, an exact copy of that state."""
    if perfect_of is not None:
        s = perfect_of
        return FrameState(
            joint_pos=s.joint_pos.copy(), joint_vel=s.joint_vel.copy(),
            anchor_pos=s.anchor_pos.copy(), anchor_quat=s.anchor_quat.copy(),
            anchor_lin_vel=s.anchor_lin_vel.copy(), body_pos=s.body_pos.copy(),
            body_quat=s.body_quat.copy(), body_lin_vel=s.body_lin_vel.copy(),
            body_ang_vel=s.body_ang_vel.copy(),
        )
    B, J = model.num_bodies, model.dof
    return FrameState(
        joint_pos=rng.uniform(model.q_min, model.q_max),
        joint_vel=rng.normal(size=J),
        anchor_pos=rng.normal(size=3),
        anchor_quat=rand_quat(rng),
        anchor_lin_vel=rng.normal(size=3),
        body_pos=rng.normal(size=(B, 3)),
        body_quat=rand_quat(rng, (B,)),
        body_lin_vel=rng.normal(size=(B, 3)),
        body_ang_vel=rng.normal(size=(B, 3)),
        joint_acc=rng.normal(size=J),
        joint_torque=rng.normal(size=J),
        contact_forces=rng.normal(size=(B, 3)),
        last_action=rng.normal(size=J),
        action=rng.normal(size=J),
    )


class TestQuatDistance:
    def test_identity(self):
        q = rand_quat(np.random.default_rng(0))
        assert quat_distance(q, q) == pytest.approx(0.0, abs=1e-9)

    def test_double_cover(self):
        q = rand_quat(np.random.default_rng(1))
        assert quat_distance(q, -q) == pytest.approx(0.0, abs=1e-9)

    def test_quarter_turn(self):
        qid = np.array([1.0, 0, 0, 0])
        q90 = np.array([math.cos(math.pi / 4), 0, 0, math.sin(math.pi / 4)])
        assert quat_distance(qid, q90) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_rejects_non_unit(self):
        with pytest.raises(NonUnitQuaternion):
            quat_distance(np.array([2.0, 0, 0, 0]), np.array([1.0, 0, 0, 0]))

    def test_metric_properties_randomized(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            a, b, c = (rand_quat(rng) for _ in range(3))
            dab = quat_distance(a, b)
            assert dab == pytest.approx(quat_distance(b, a), abs=1e-9)
            assert 0.0 <= dab <= math.pi + 1e-12
            assert quat_distance(a, c) <= dab + quat_distance(b, c) + 1e-9


class TestExpKernel:
    def test_zero_error(self):
        assert exp_kernel(0.0, 0.3) == 1.0

    def test_analytic_point(self):
        assert exp_kernel(0.09, 0.3) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_monotone(self):
        assert exp_kernel(0.1, 0.3) > exp_kernel(0.2, 0.3)


# scalar single-term oracles, written against the term table directly
def oracle_terms(robot, ref, model):
    def kern(err, std):
        return math.exp(-err / std**2)

    def to_anchor(state):
        inv = quat.quat_conj(state.anchor_quat)
        rp = np.array([quat.rotate_vec(inv, state.body_pos[b] - state.anchor_pos)
                       for b in range(model.num_bodies)])
        rq = np.array([quat.quat_mul(inv, state.body_quat[b])
                       for b in range(model.num_bodies)])
        return rp, rq

    def mean_sq_pos(a, b, ids):
        return float(np.mean([np.sum((a[i] - b[i]) ** 2) for i in ids]))

    def mean_sq_ang(a, b, ids):
        return float(np.mean(
            [quat_distance(a[i], b[i], validate=False) ** 2 for i in ids]
        ))

    allb = list(range(model.num_bodies))
    rp, rq = to_anchor(robot)
    gp, gq = to_anchor(ref)
    out = {}
    out["track_anchor_pos"] = kern(np.sum((robot.anchor_pos - ref.anchor_pos) ** 2), 0.3)
    out["track_anchor_ori"] = kern(
        quat_distance(robot.anchor_quat, ref.anchor_quat, validate=False) ** 2, 0.4)
    out["track_body_pos_rel"] = kern(mean_sq_pos(rp, gp, allb), 0.3)
    out["track_body_ori_rel"] = kern(mean_sq_ang(rq, gq, allb), 0.4)
    out["track_body_lin_vel"] = kern(mean_sq_pos(robot.body_lin_vel, ref.body_lin_vel, allb), 1.0)
    out["track_body_ang_vel"] = kern(mean_sq_pos(robot.body_ang_vel, ref.body_ang_vel, allb), 3.14)
    out["track_anchor_lin_vel"] = kern(np.sum((robot.anchor_lin_vel - ref.anchor_lin_vel) ** 2), 1.0)
    out["teleop_body_pos"] = (
        0.5 * kern(mean_sq_pos(robot.body_pos, ref.body_pos, model.upper_bodies), 0.5)
        + 0.5 * kern(mean_sq_pos(robot.body_pos, ref.body_pos, model.lower_bodies), 0.5))
    out["teleop_vr_pos"] = kern(mean_sq_pos(robot.body_pos, ref.body_pos, model.vr_bodies), 0.5)
    out["teleop_feet_pos"] = kern(mean_sq_pos(robot.body_pos, ref.body_pos, model.feet), 0.5)
    out["teleop_body_ori"] = kern(mean_sq_ang(robot.body_quat, ref.body_quat, allb), 0.5)
    out["teleop_body_ang_vel"] = kern(mean_sq_pos(robot.body_ang_vel, ref.body_ang_vel, allb), 3.14)
    out["teleop_body_lin_vel"] = kern(mean_sq_pos(robot.body_lin_vel, ref.body_lin_vel, allb), 1.0)
    out["pen_contacts"] = float(sum(
        np.linalg.norm(robot.contact_forces[b]) > 1.0 for b in model.contact_penalized))
    out["pen_action_rate"] = float(np.sum((robot.action - robot.last_action) ** 2))
    out["pen_joint_limit"] = float(np.sum(
        (robot.joint_pos < model.q_min) | (robot.joint_pos > model.q_max)))
    out["pen_joint_acc"] = float(np.sum(robot.joint_acc**2))
    out["pen_joint_torque"] = float(np.sum(robot.joint_torque**2))
    return out


WEIGHTS = {t.name: t.weight for t in default_reward_spec()}


class TestComputeRewards:
    def test_perfect_tracking_total_exact(self, model):
        rng = np.random.default_rng(3)
        ref = random_state(rng, model)
        robot = random_state(rng, model, perfect_of=ref)
        bd = compute_rewards(robot, ref, model=model)
        assert float(bd.total) == 11.0
        assert positive_weight_sum(default_reward_spec()) == 11.0
        for t in default_reward_spec():
            if t.kind != "penalty":
                assert float(bd.terms[t.name]) == 1.0
            else:
                assert float(bd.terms[t.name]) == 0.0

    def test_all_terms_match_scalar_oracle(self, model):
        rng = np.random.default_rng(4)
        for _ in range(100):
            robot = random_state(rng, model)
            ref = random_state(rng, model)
            bd = compute_rewards(robot, ref, model=model)
            oracle = oracle_terms(robot, ref, model)
            assert set(oracle) == set(bd.terms)
            for name, val in oracle.items():
                assert float(bd.terms[name]) == pytest.approx(val, abs=1e-9), name
            total = sum(WEIGHTS[n] * v for n, v in oracle.items())
            assert float(bd.total) == pytest.approx(total, abs=1e-9)

    def test_contact_threshold(self, model):
        rng = np.random.default_rng(5)
        ref = random_state(rng, model)
        robot = random_state(rng, model, perfect_of=ref)
        robot.zeros_like_dynamics()
        b = model.contact_penalized[0]
        robot.contact_forces = np.zeros((model.num_bodies, 3))
        robot.contact_forces[b] = [0.0, 0.0, 2.0]
        bd = compute_rewards(robot, ref, model=model)
        assert float(bd.terms["pen_contacts"]) == 1.0
        assert float(bd.total) == pytest.approx(11.0 - 0.05, abs=1e-12)
        # feet contact is free
        robot.contact_forces[:] = 0.0
        robot.contact_forces[model.feet[0]] = [0.0, 0.0, 50.0]
        bd = compute_rewards(robot, ref, model=model)
        assert float(bd.terms["pen_contacts"]) == 0.0

    def test_joint_limit_counts_violations(self, model):
        rng = np.random.default_rng(6)
        ref = random_state(rng, model)
        robot = random_state(rng, model, perfect_of=ref)
        robot.zeros_like_dynamics()
        robot.joint_pos = model.q_default.copy()
        robot.joint_pos[3] = model.q_max[3] + 0.1
        bd = compute_rewards(robot, ref, model=model)
        assert float(bd.terms["pen_joint_limit"]) == 1.0

    def test_kernel_terms_in_unit_interval(self, model):
        rng = np.random.default_rng(7)
        for _ in range(50):
            bd = compute_rewards(random_state(rng, model), random_state(rng, model),
                                 model=model)
            for t in default_reward_spec():
                if t.kind != "penalty":
                    assert 0.0 <= float(bd.terms[t.name]) <= 1.0

    def test_per_term_sensitivity(self, model):
        """Each kernel term strictly decreases when its own error grows."""
        rng = np.random.default_rng(8)
        ref = random_state(rng, model)
        base = compute_rewards(random_state(rng, model, perfect_of=ref), ref, model=model)

        def perturbed(**deltas):
            s = random_state(rng, model, perfect_of=ref)
            for name, d in deltas.items():
                setattr(s, name, getattr(s, name) + d)
            return compute_rewards(s, ref, model=model)

        bd = perturbed(anchor_pos=np.array([0.1, 0, 0]))
        assert float(bd.terms["track_anchor_pos"]) < float(base.terms["track_anchor_pos"])
        bd = perturbed(anchor_lin_vel=np.array([0.3, 0, 0]))
        assert float(bd.terms["track_anchor_lin_vel"]) < 1.0
        bd = perturbed(body_lin_vel=0.2)
        assert float(bd.terms["track_body_lin_vel"]) < 1.0
        assert float(bd.terms["teleop_body_lin_vel"]) < 1.0
        bd = perturbed(body_ang_vel=0.2)
        assert float(bd.terms["track_body_ang_vel"]) < 1.0
        bd = perturbed(body_pos=0.1)
        assert float(bd.terms["teleop_body_pos"]) < 1.0
        assert float(bd.terms["teleop_vr_pos"]) < 1.0
        assert float(bd.terms["teleop_feet_pos"]) < 1.0

    def test_dimension_mismatch(self, model):
        rng = np.random.default_rng(9)
        s = random_state(rng, model)
        bad = random_state(rng, model)
        bad.joint_pos = np.zeros(4)
        with pytest.raises(DimensionMismatch):
            compute_rewards(bad, s, model=model)


def rigid_transform_state(s, R_quat, d):
    """Apply one rigid world transform to every world-frame field."""
    s.zeros_like_dynamics()
    out = FrameState(
        joint_pos=s.joint_pos.copy(), joint_vel=s.joint_vel.copy(),
        anchor_pos=quat.rotate_vec(R_quat, s.anchor_pos) + d,
        anchor_quat=quat.quat_mul(R_quat, s.anchor_quat),
        anchor_lin_vel=quat.rotate_vec(R_quat, s.anchor_lin_vel),
        body_pos=quat.rotate_vec(R_quat, s.body_pos) + d,
        body_quat=quat.quat_mul(np.broadcast_to(R_quat, s.body_quat.shape), s.body_quat),
        body_lin_vel=quat.rotate_vec(R_quat, s.body_lin_vel),
        body_ang_vel=quat.rotate_vec(R_quat, s.body_ang_vel),
        joint_acc=s.joint_acc.copy(), joint_torque=s.joint_torque.copy(),
        contact_forces=quat.rotate_vec(R_quat, s.contact_forces),
        last_action=s.last_action.copy(), action=s.action.copy(),
    )
    return out


def nearby_state(rng, model, ref, scale=0.05):
    """A small perturbation of ref, keeping kernels in their sensitive range."""
    s = random_state(rng, model, perfect_of=ref)
    s.anchor_pos = s.anchor_pos + rng.normal(size=3) * scale
    s.body_pos = s.body_pos + rng.normal(size=s.body_pos.shape) * scale
    s.body_lin_vel = s.body_lin_vel + rng.normal(size=s.body_lin_vel.shape) * scale
    return s


class TestFrameSemantics:
    """Displacing the robot (reference fixed) separates the two term frames:
    anchor-relative terms cannot see it, world-frame terms must."""

    def test_anchor_relative_invariant_world_not(self, model):
        rng = np.random.default_rng(10)
        ref = random_state(rng, model)
        robot = nearby_state(rng, model, ref)
        R = rand_quat(rng)
        d = rng.normal(size=3) * 0.3
        moved = rigid_transform_state(robot, R, d)
        bd0 = compute_rewards(robot, ref, model=model)
        bd1 = compute_rewards(moved, ref, model=model)
        for name in ("track_body_pos_rel", "track_body_ori_rel"):
            assert float(bd1.terms[name]) == pytest.approx(float(bd0.terms[name]), abs=1e-9)
        for name in ("teleop_body_pos", "teleop_vr_pos", "teleop_feet_pos",
                     "track_anchor_pos"):
            assert abs(float(bd1.terms[name]) - float(bd0.terms[name])) > 1e-6

    def test_transforming_both_states_preserves_everything(self, model):
        rng = np.random.default_rng(11)
        ref = random_state(rng, model)
        robot = random_state(rng, model)
        R = rand_quat(rng)
        d = rng.normal(size=3)
        bd0 = compute_rewards(robot, ref, model=model)
        bd1 = compute_rewards(rigid_transform_state(robot, R, d),
                              rigid_transform_state(ref, R, d), model=model)
        for name, v in bd0.terms.items():
            assert float(bd1.terms[name]) == pytest.approx(float(v), abs=1e-8), name


def test_toml_round_trip(tmp_path):
    spec = default_reward_spec()
    text = spec_to_toml(spec)
    back = spec_from_toml(text)
    assert [t.name for t in back] == [t.name for t in spec]
    for a, b in zip(spec, back):
        assert a.weight == b.weight and a.std == b.std and a.kind == b.kind
        assert a.params == b.params


def test_shipped_default_file_matches_code():
    import importlib.resources as res

    text = (res.files("mosaic") / "data" / "rewards_default.toml").read_text()
    assert spec_from_toml(text) == default_reward_spec()
