"""PPO with a clipped surrogate, GAE, and KL-adaptive learning rate.

Asymmetric actor-critic: the actor consumes the noisy proprio history, the
critic the noise-free current frame plus privileged terms. The learning
rate halves when the measured per-minibatch KL exceeds twice the target and
doubles when it falls below half of it, clamped to [lr_min, lr_max] — the
usual adaptive schedule for a desired-KL setting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..curriculum import SamplerState, record_episode, sample_start_time
from ..sim_env import SUCCESS_TERMS, TrackingEnv
from .nets import Adam, PolicyNet, clip_grad_norm
from .obs import ObservationBuilder

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class PPOConfig:
    rollout_length: int = 24
    epochs: int = 5
    minibatches: int = 4
    lr: float = 1e-3
    desired_kl: float = 0.01
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    value_coef: float = 1.0
    entropy_coef: float = 0.005
    max_grad_norm: float = 1.0
    lr_min: float = 1e-6
    lr_max: float = 1e-2
    init_std: float = 1.0
    actor_hidden: tuple[int, ...] = (64, 64)
    critic_hidden: tuple[int, ...] = (64, 64)

    def validate(self) -> "PPOConfig":
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be > 0")
        return self


def gae_advantages(rewards, values, dones, gamma: float, lam: float):
    """Standard GAE over (T, E) arrays; `values` carries a bootstrap row T+1.

    returns = advantages + values[:-1]; a done step cuts both the bootstrap
    and the running trace.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    gae = np.zeros_like(rewards[0])
    for t in reversed(range(T)):
        not_done = ~dones[t]
        delta = rewards[t] + gamma * values[t + 1] * not_done - values[t]
        gae = delta + gamma * lam * not_done * gae
        adv[t] = gae
    return adv, adv + values[:-1]


class ActorCritic:
    def __init__(self, obs_dim: int, critic_dim: int, act_dim: int,
                 cfg: PPOConfig | None = None, rng: np.random.Generator | None = None):
        self.cfg = (cfg or PPOConfig()).validate()
        rng = rng or np.random.default_rng(0)
        self.actor = PolicyNet(
            [obs_dim, *self.cfg.actor_hidden, act_dim], rng=rng,
            log_std_init=np.log(self.cfg.init_std),
        )
        self.critic = PolicyNet([critic_dim, *self.cfg.critic_hidden, 1], rng=rng)
        # the critic head works in discounted-return units scaled by (1-gamma)
        # so its targets are O(reward) and reachable within small step budgets
        self.value_scale = 1.0 / (1.0 - self.cfg.gamma) if self.cfg.gamma < 1 else 1.0

    @property
    def log_std(self):
        return self.actor.log_std

    def act(self, obs, rng: np.random.Generator):
        mean = self.actor.forward(obs)
        std = np.exp(self.log_std)
        action = mean + std * rng.standard_normal(mean.shape)
        return action, self.log_prob(mean, action), mean

    def log_prob(self, mean, action):
        std = np.exp(self.log_std)
        z = (action - mean) / std
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std) \
            - 0.5 * mean.shape[-1] * LOG_2PI

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (LOG_2PI + 1.0)))

    def value(self, critic_obs):
        return self.critic.forward(critic_obs)[:, 0] * self.value_scale

    def params(self):
        return self.actor.params() + self.critic.params()

    def copy(self) -> "ActorCritic":
        out = ActorCritic.__new__(ActorCritic)
        out.cfg = self.cfg
        out.actor = self.actor.copy()
        out.critic = self.critic.copy()
        out.value_scale = self.value_scale
        return out

    def policy_fn(self):
        """Deterministic callable (actor obs -> mean action) for evaluation."""
        return self.actor.forward


@dataclass
class Rollout:
    obs: np.ndarray         # (T, E, Do)
    critic_obs: np.ndarray  # (T, E, Dc)
    actions: np.ndarray     # (T, E, A)
    logp: np.ndarray        # (T, E)
    mean: np.ndarray        # (T, E, A)
    log_std: np.ndarray     # (A,) at collection time
    rewards: np.ndarray     # (T, E)
    dones: np.ndarray       # (T, E)
    values: np.ndarray      # (T+1, E)
    timeouts: np.ndarray | None = None  # (T, E) done by motion end / timeout


def collect_rollout(env: TrackingEnv, ac: ActorCritic, builder: ObservationBuilder,
                    rng: np.random.Generator, sampler: SamplerState | None = None,
                    episode_log: list | None = None) -> Rollout:
    """Step the batched env for rollout_length ticks under the current policy."""
    T, E = ac.cfg.rollout_length, env.num_envs
    A = ac.actor.out_dim
    obs = np.zeros((T, E, builder.spec.actor_dim))
    cobs = np.zeros((T, E, builder.spec.critic_dim))
    actions = np.zeros((T, E, A))
    logp = np.zeros((T, E))
    mean = np.zeros((T, E, A))
    rewards = np.zeros((T, E))
    dones = np.zeros((T, E), dtype=bool)
    values = np.zeros((T + 1, E))

    timeouts = np.zeros((T, E), dtype=bool)
    for t in range(T):
        o, c = builder.observe(env)
        values[t] = ac.value(c)
        a, lp, mu = ac.act(o, rng)
        breakdown, done, info = env.step(a)
        obs[t], cobs[t] = o, c
        actions[t], logp[t], mean[t] = a, lp, mu
        rewards[t] = breakdown.total
        dones[t] = done
        timeouts[t] = done & np.isin(info["termination"], SUCCESS_TERMS)
        if np.any(done):
            for i in np.nonzero(done)[0]:
                failed = info["termination"][i] not in SUCCESS_TERMS
                if sampler is not None:
                    record_episode(sampler, int(env.motion[i]),
                                   int(env.start_frame[i]), failed)
                if episode_log is not None:
                    episode_log.append(
                        (int(env.motion[i]), failed, int(env.ep_steps[i]))
                    )
        if len(info["reset_ids"]):
            builder.reset(env, env_ids=info["reset_ids"])
        if sampler is not None:
            sampler.advance(E)

    # bootstrap value from the current state without touching the history
    clean = builder._proprio(env)
    priv = builder._privileged(env)
    values[T] = ac.value(np.concatenate([clean, priv], axis=-1))
    return Rollout(obs, cobs, actions, logp, mean, ac.log_std.copy(),
                   rewards, dones, values, timeouts)


def _gaussian_kl(mean_old, log_std_old, mean_new, log_std_new):
    """Analytic KL(old || new) for diagonal Gaussians, mean over the batch."""
    var_old = np.exp(2.0 * log_std_old)
    var_new = np.exp(2.0 * log_std_new)
    per_dim = (
        log_std_new - log_std_old
        + (var_old + (mean_old - mean_new) ** 2) / (2.0 * var_new)
        - 0.5
    )
    return float(np.mean(np.sum(per_dim, axis=-1)))


def ppo_update(ac: ActorCritic, rollout: Rollout, optimizer: Adam,
               rng: np.random.Generator, normalize_adv: bool = True):
    """One PPO update over the rollout. Returns a stats dict.

    epochs x minibatches passes; clipped surrogate + value MSE + entropy
    bonus; global grad-norm clip; per-minibatch KL-adaptive learning rate.
    """
    cfg = ac.cfg
    T, E = rollout.rewards.shape
    A = rollout.actions.shape[-1]
    rewards = rollout.rewards
    if rollout.timeouts is not None and np.any(rollout.timeouts):
        # episodes cut by the clip running out (or the step cap) are not
        # failures: bootstrap their value so identical mid-cycle states do
        # not carry horizon-dependent targets
        rewards = rewards + cfg.gamma * rollout.values[:-1] * rollout.timeouts
    adv, returns = gae_advantages(rewards, rollout.values, rollout.dones,
                                  cfg.gamma, cfg.lam)
    obs = rollout.obs.reshape(T * E, -1)
    cobs = rollout.critic_obs.reshape(T * E, -1)
    acts = rollout.actions.reshape(T * E, A)
    logp_old = rollout.logp.reshape(T * E)
    mean_old = rollout.mean.reshape(T * E, A)
    log_std_old = rollout.log_std
    adv = adv.reshape(T * E)
    returns = returns.reshape(T * E)
    if normalize_adv:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    n = T * E
    mb = max(1, n // cfg.minibatches)
    kls, clip_fracs, pi_losses, v_losses = [], [], [], []

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start : start + mb]
            o, co, a = obs[idx], cobs[idx], acts[idx]
            adv_b, ret_b = adv[idx], returns[idx]
            lp_old, mu_old = logp_old[idx], mean_old[idx]

            mu, a_cache = ac.actor.forward_cached(o)
            std = np.exp(ac.log_std)
            z = (a - mu) / std
            lp_new = -0.5 * np.sum(z * z, axis=-1) - np.sum(ac.log_std) \
                - 0.5 * A * LOG_2PI
            ratio = np.exp(lp_new - lp_old)
            surr1 = ratio * adv_b
            surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv_b
            pi_loss = -np.mean(np.minimum(surr1, surr2))

            # d(pi_loss)/d(logp): active only where the unclipped branch wins
            use1 = surr1 <= surr2
            dlogp = -(adv_b * ratio * use1) / len(idx)
            # logp gradients: d/d mu = z/std ; d/d log_std = z^2 - 1
            dmu = dlogp[:, None] * (z / std)
            dlogstd = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
            dlogstd -= cfg.entropy_coef  # entropy bonus: d(-c*H)/dlog_std = -c
            gW_a, gb_a = ac.actor.backward(a_cache, dmu)

            # value regression in the critic's scaled units
            v_raw, c_cache = ac.critic.forward_cached(co)
            v_raw = v_raw[:, 0]
            tgt = ret_b / ac.value_scale
            v_loss = float(np.mean((v_raw - tgt) ** 2))
            dv = (2.0 * cfg.value_coef * (v_raw - tgt) / len(idx))[:, None]
            gW_c, gb_c = ac.critic.backward(c_cache, dv)

            grads = [*gW_a, *gb_a, dlogstd, *gW_c, *gb_c]
            params = [*ac.actor.Ws, *ac.actor.bs, ac.log_std,
                      *ac.critic.Ws, *ac.critic.bs]
            clip_grad_norm(grads, cfg.max_grad_norm)

            kl = _gaussian_kl(mu_old, log_std_old, mu, ac.log_std)
            optimizer.step(params, grads)

            kls.append(kl)
            clip_fracs.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)))
            pi_losses.append(float(pi_loss))
            v_losses.append(v_loss)

    # adaptive schedule, applied once per update on the measured (cumulative
    # drift since rollout) KL: halve above 2x the target, double below half,
    # clamp to [lr_min, lr_max]
    mean_kl = float(np.mean(kls))
    if cfg.desired_kl > 0:
        if mean_kl > 2.0 * cfg.desired_kl:
            optimizer.lr = max(cfg.lr_min, optimizer.lr / 2.0)
        elif 0.0 < mean_kl < cfg.desired_kl / 2.0:
            optimizer.lr = min(cfg.lr_max, optimizer.lr * 2.0)

    return {
        "kl": float(np.mean(kls)),
        "clip_fraction": float(np.mean(clip_fracs)),
        "pi_loss": float(np.mean(pi_losses)),
        "v_loss": float(np.mean(v_losses)),
        "lr": optimizer.lr,
        "mean_reward": float(np.mean(rollout.rewards)),
    }


def train(env: TrackingEnv, ac: ActorCritic, total_env_steps: int,
          seed: int = 0, sampler: SamplerState | None = None,
          noise: bool = True, log: list | None = None) -> ActorCritic:
    """PPO training loop over a batched env; returns the trained ActorCritic.

    `log` (if given) collects one dict per update with reward/KL/lr stats.
    """
    rng = np.random.default_rng(seed)
    builder = ObservationBuilder(env.model, env.num_envs, noise=noise,
                                 rng=np.random.default_rng(seed + 1))
    env.auto_reset = True
    if sampler is not None:
        env.reset_sampler = make_curriculum_sampler(env, sampler,
                                                    np.random.default_rng(seed + 2))
    builder.reset(env)
    optimizer = Adam(ac.params(), lr=ac.cfg.lr)

    steps_per_update = ac.cfg.rollout_length * env.num_envs
    updates = max(1, total_env_steps // steps_per_update)
    for it in range(updates):
        rollout = collect_rollout(env, ac, builder, rng, sampler=sampler)
        stats = ppo_update(ac, rollout, optimizer, rng)
        if log is not None:
            stats["update"] = it
            stats["env_steps"] = (it + 1) * steps_per_update
            log.append(stats)
    return ac


def make_curriculum_sampler(env: TrackingEnv, sampler: SamplerState,
                            rng: np.random.Generator):
    """reset_sampler hook drawing start frames from the failure-aware bins."""

    def hook(ids):
        motions = env.motion[ids]
        frames = np.array(
            [sample_start_time(sampler, int(m), rng) for m in motions], dtype=np.int64
        )
        return motions, frames

    return hook
