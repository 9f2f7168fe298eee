"""Residual distillation and the adaptation strategy zoo.

The student is the frozen base plus an additive residual head. Distillation
regresses the composite student onto per-regime teachers: the base itself on
general-regime samples (so broad coverage survives) and an
interface-adapted teacher on adaptation-regime samples. Samples are tagged
by the source of the motion their environment was tracking.

Strategies:
  finetune  — keep optimizing a copy of the base on adaptation data only.
  continual — same, but on a general/adaptation mixture.
  residual  — train an adaptation teacher, then distill both teachers into
              the frozen base + residual composition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import MissingData, UntaggedSample
from ..motion_bank import MotionBank, build_bank
from ..sim_env import EnvConfig, StreamedReference, TrackingEnv
from .nets import Adam, ComposedPolicy, PolicyNet, init_residual
from .obs import ObservationBuilder
from .ppo import ActorCritic, train

REGIME_ADAPT = "ADAPT"
REGIME_GMT = "GMT"


@dataclass
class DistillConfig:
    w_adapt: float = 1.0
    w_gmt: float = 1.0
    residual_hidden: tuple[int, ...] = (32, 32)
    out_gain: float = 0.01
    lr: float = 1e-3
    rollout_with: str = "student"   # which policy generates distill rollouts

    def validate(self) -> "DistillConfig":
        if self.w_adapt < 0 or self.w_gmt < 0 or (self.w_adapt == 0 and self.w_gmt == 0):
            raise ValueError("regime weights must be >= 0 and not both zero")
        return self


def distill_step(base: PolicyNet, residual: PolicyNet, teachers: dict[str, PolicyNet],
                 obs: np.ndarray, regimes: np.ndarray, cfg: DistillConfig,
                 optimizer: Adam | None = None):
    """One dual-teacher MSE step; gradients flow only into the residual.

    loss = sum_k w_k * mean_{i in regime k} ||student(o_i) - teacher_k(o_i)||^2
    Returns (loss, grads); applies them when an optimizer is given.
    """
    obs = np.atleast_2d(obs)
    regimes = np.asarray(regimes)
    weights = {REGIME_ADAPT: cfg.w_adapt, REGIME_GMT: cfg.w_gmt}
    known = set(weights) & set(teachers)
    unknown = set(np.unique(regimes)) - known
    if unknown:
        raise UntaggedSample(f"samples tagged {sorted(unknown)} have no teacher/weight")

    res_out, cache = residual.forward_cached(obs)
    student = base.forward(obs) + res_out
    grad_out = np.zeros_like(student)
    loss = 0.0
    for k in known:
        mask = regimes == k
        n_k = int(np.sum(mask))
        if n_k == 0:
            continue
        target = teachers[k].forward(obs[mask])
        diff = student[mask] - target
        loss += weights[k] * float(np.mean(np.sum(diff**2, axis=-1)))
        grad_out[mask] = 2.0 * weights[k] * diff / n_k
    gWs, gbs = residual.backward(cache, grad_out)
    grads = [*gWs, *gbs, np.zeros_like(residual.log_std)]
    if optimizer is not None:
        optimizer.step(residual.params(), grads)
    return loss, grads


# ---------------------------------------------------------------------------
# Regimes and strategy plumbing
# ---------------------------------------------------------------------------

@dataclass
class DataRegime:
    """One training data regime: a bank plus how the policy observes it."""

    bank: MotionBank
    obs_stream: StreamedReference | None = None
    clips: list | None = None      # kept so regimes can be merged


def merge_regimes(general: DataRegime, adapt: DataRegime):
    """Concatenate both regimes into one bank with per-motion regime tags.

    The merged observation stream keeps each motion's own view (clean for
    general motions, streamed for adaptation motions).
    """
    if general.clips is None or adapt.clips is None:
        raise MissingData("merge_regimes needs the regimes' clip lists")
    bank = build_bank(list(general.clips) + list(adapt.clips))

    def stream_of(reg: DataRegime):
        if reg.obs_stream is not None:
            return reg.obs_stream
        return StreamedReference(
            reg.bank.joint_pos, reg.bank.joint_vel, reg.bank.body_quat_w[:, 0, :]
        )
    gs, as_ = stream_of(general), stream_of(adapt)
    stream = StreamedReference(
        joint_pos=np.concatenate([gs.joint_pos, as_.joint_pos]),
        joint_vel=np.concatenate([gs.joint_vel, as_.joint_vel]),
        anchor_quat=np.concatenate([gs.anchor_quat, as_.anchor_quat]),
    )
    tags = np.array(
        [REGIME_GMT] * general.bank.motion_count + [REGIME_ADAPT] * adapt.bank.motion_count
    )
    return bank, stream, tags


@dataclass
class AdaptBudgets:
    rl_env_steps: int = 200_000
    rl_envs: int = 64
    distill_steps: int = 400
    distill_envs: int = 16
    harvest_ticks: int = 8         # env ticks between distill batches


@dataclass
class AdaptResult:
    policy: object                 # callable on actor observations
    ac: ActorCritic | None = None
    residual: PolicyNet | None = None
    teacher_adapt: ActorCritic | None = None


def _make_env(regime: DataRegime, num_envs, env_cfg, seed, reward_spec=None):
    return TrackingEnv(
        regime.bank, num_envs, cfg=env_cfg, reward_spec=reward_spec,
        seed=seed, obs_stream=regime.obs_stream, auto_reset=True,
    )


def _mixture_env(general, adapt, num_envs, env_cfg, seed, adapt_fraction):
    bank, stream, tags = merge_regimes(general, adapt)
    env = TrackingEnv(bank, num_envs, cfg=env_cfg, seed=seed,
                      obs_stream=stream, auto_reset=True)
    g_ids = np.nonzero(tags == REGIME_GMT)[0]
    a_ids = np.nonzero(tags == REGIME_ADAPT)[0]
    rng = np.random.default_rng(seed + 7)

    def draw(n):
        pick_adapt = rng.random(n) < adapt_fraction
        out = np.where(
            pick_adapt,
            a_ids[rng.integers(0, len(a_ids), n)] if len(a_ids) else 0,
            g_ids[rng.integers(0, len(g_ids), n)] if len(g_ids) else 0,
        )
        return out.astype(np.int64)

    env.reset_sampler = lambda ids: (draw(len(ids)), np.zeros(len(ids), dtype=np.int64))
    env.reset(draw(num_envs), np.zeros(num_envs, dtype=np.int64))
    return env, tags


def adapt_strategy(
    strategy: str,
    base: ActorCritic,
    adapt_data: DataRegime | None,
    general_data: DataRegime | None,
    budgets: AdaptBudgets | None = None,
    env_cfg: EnvConfig | None = None,
    distill_cfg: DistillConfig | None = None,
    seed: int = 0,
    adapt_teacher: ActorCritic | None = None,
    adapt_fraction: float = 0.5,
) -> AdaptResult:
    """Produce an adapted policy by one of the three strategies."""
    budgets = budgets or AdaptBudgets()
    env_cfg = env_cfg or EnvConfig()
    distill_cfg = (distill_cfg or DistillConfig()).validate()

    if strategy == "finetune":
        if adapt_data is None:
            raise MissingData("finetune needs adaptation data")
        ac = base.copy()
        env = _make_env(adapt_data, budgets.rl_envs, env_cfg, seed)
        env.reset(np.arange(budgets.rl_envs) % adapt_data.bank.motion_count,
                  np.zeros(budgets.rl_envs, dtype=np.int64))
        train(env, ac, budgets.rl_env_steps, seed=seed)
        return AdaptResult(policy=ac.policy_fn(), ac=ac)

    if strategy == "continual":
        if adapt_data is None or general_data is None:
            raise MissingData("continual needs both regimes")
        ac = base.copy()
        env, _ = _mixture_env(general_data, adapt_data, budgets.rl_envs,
                              env_cfg, seed, adapt_fraction)
        train(env, ac, budgets.rl_env_steps, seed=seed)
        return AdaptResult(policy=ac.policy_fn(), ac=ac)

    if strategy == "residual":
        if adapt_data is None or general_data is None:
            raise MissingData("residual needs both regimes")
        teacher = adapt_teacher
        if teacher is None:
            teacher = adapt_strategy(
                "finetune", base, adapt_data, None, budgets, env_cfg,
                distill_cfg, seed=seed,
            ).ac
        rng = np.random.default_rng(seed + 3)
        residual = init_residual(
            [base.actor.in_dim, *distill_cfg.residual_hidden, base.actor.out_dim],
            rng=rng, out_gain=distill_cfg.out_gain,
        )
        student = ComposedPolicy(base.actor, residual)
        teachers = {REGIME_ADAPT: teacher.actor, REGIME_GMT: base.actor}

        env, tags = _mixture_env(general_data, adapt_data, budgets.distill_envs,
                                 env_cfg, seed + 11, adapt_fraction)
        builder = ObservationBuilder(env.model, env.num_envs, noise=False)
        builder.reset(env)
        optimizer = Adam(residual.params(), lr=distill_cfg.lr)
        roller = student if distill_cfg.rollout_with == "student" else teacher.actor

        losses = []
        for _ in range(budgets.distill_steps):
            batch_obs, batch_tags = [], []
            for _ in range(budgets.harvest_ticks):
                o, _ = builder.observe(env)
                batch_obs.append(o)
                batch_tags.append(tags[env.motion])
                _, _, info = env.step(roller(o))
                if len(info["reset_ids"]):
                    builder.reset(env, env_ids=info["reset_ids"])
            loss, _ = distill_step(
                base.actor, residual, teachers,
                np.concatenate(batch_obs), np.concatenate(batch_tags),
                distill_cfg, optimizer,
            )
            losses.append(loss)
        return AdaptResult(policy=student, residual=residual, teacher_adapt=teacher)

    raise ValueError(f"unknown strategy {strategy!r}")
