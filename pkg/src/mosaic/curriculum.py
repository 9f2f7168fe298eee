"""Two-level adaptive motion resampling.

Motion level: environments are periodically remapped to motions drawn from a
difficulty/novelty/uniform probability mixture. Difficulty is the per-motion
failure rate F_m / (S_m + eps), capped at beta times the mean rate so early
extreme failures cannot dominate; novelty favors motions with fewer lifetime
assignments (1 / sqrt(A_m + 1)); a uniform floor prevents collapse. The
failure and novelty weights ramp in linearly after a warmup so cold-start
failure statistics stay out of the mixture while they are uninformative.

Within-motion level: each motion's timeline is split into coarse bins whose
failure EMAs are updated online; start times are drawn from the smoothed,
floored, renormalized bin weights so training focuses on unstable segments
without abandoning coverage.

S_m counts episodes: it is incremented once per sample_start_time call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import MotionOutOfRange, PoolTooLarge


@dataclass
class SamplerConfig:
    w_f_target: float = 0.5      # difficulty mixture weight after ramp
    w_n_target: float = 0.2      # novelty mixture weight after ramp
    warmup_steps: int = 1000
    ramp_steps: int = 4000
    cap_beta: float = 3.0        # failure-rate cap multiplier
    epsilon: float = 1.0         # count regularizer in F/(S+eps)
    active_pool: int = 0         # motions per epoch; 0 means "all"
    remap_interval: int = 2000   # steps between environment reassignments
    bin_width: int = 50          # frames per within-motion bin (1 s at 50 Hz)
    ema_decay: float = 0.9
    smooth_sigma: float = 1.0    # kernel width in bins
    floor_prob: float = 0.02     # additive per-bin floor before renormalizing

    def validate(self) -> "SamplerConfig":
        if self.w_f_target + self.w_n_target > 1.0 + 1e-12:
            raise ValueError("w_f_target + w_n_target must be <= 1")
        if self.w_f_target < 0 or self.w_n_target < 0:
            raise ValueError("mixture weight targets must be >= 0")
        if self.cap_beta <= 0:
            raise ValueError("cap_beta must be > 0")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must be in (0, 1)")
        if self.floor_prob <= 0:
            raise ValueError("floor_prob must be > 0")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "SamplerConfig":
        """Build from a parsed TOML/JSON block; unknown keys are an error."""
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise ValueError(f"unknown sampler config key(s): {sorted(bad)}")
        return cls(**data).validate()


class SamplerState:
    """Mutable curriculum state: per-motion counters and per-bin failure EMAs.

    Single-writer: one controller mutates it between rollout batches.
    """

    def __init__(self, lengths: np.ndarray, cfg: SamplerConfig | None = None):
        self.cfg = (cfg or SamplerConfig()).validate()
        self.lengths = np.asarray(lengths, dtype=np.int64)
        M = len(self.lengths)
        self.sample_counts = np.zeros(M, dtype=np.int64)   # S_m
        self.fail_counts = np.zeros(M, dtype=np.int64)     # F_m
        self.assign_counts = np.zeros(M, dtype=np.int64)   # A_m
        self.bin_fail_ema = [
            np.zeros(self.num_bins(m), dtype=np.float64) for m in range(M)
        ]
        self.step = 0
        self._last_remap_step: int | None = None
        self._assignment: np.ndarray | None = None

    @property
    def motion_count(self) -> int:
        return len(self.lengths)

    def num_bins(self, m: int) -> int:
        return int(-(-self.lengths[m] // self.cfg.bin_width))  # ceil

    def bin_of(self, m: int, frame: int) -> int:
        return min(int(frame) // self.cfg.bin_width, self.num_bins(m) - 1)

    def advance(self, steps: int) -> None:
        self.step += int(steps)

    # --- serialization (JSON dump only, per module scope) ---

    def to_json(self) -> str:
        return json.dumps(
            {
                "step": self.step,
                "lengths": self.lengths.tolist(),
                "sample_counts": self.sample_counts.tolist(),
                "fail_counts": self.fail_counts.tolist(),
                "assign_counts": self.assign_counts.tolist(),
                "bin_fail_ema": [e.tolist() for e in self.bin_fail_ema],
            },
            sort_keys=True,
        )


def schedule_weights(state: SamplerState) -> tuple[float, float, float]:
    """(w_f, w_n, w_u) at the state's current step: zero through warmup,
    linear ramp to targets, constant afterwards."""
    cfg = state.cfg
    if state.step < cfg.warmup_steps:
        frac = 0.0
    elif cfg.ramp_steps <= 0:
        frac = 1.0
    else:
        frac = min(1.0, (state.step - cfg.warmup_steps) / cfg.ramp_steps)
    w_f = cfg.w_f_target * frac
    w_n = cfg.w_n_target * frac
    return w_f, w_n, 1.0 - w_f - w_n


def failure_rates(state: SamplerState) -> np.ndarray:
    """Capped per-motion failure rates: min(F/(S+eps), beta * mean_rate)."""
    cfg = state.cfg
    r = state.fail_counts / (state.sample_counts + cfg.epsilon)
    cap = cfg.cap_beta * float(np.mean(r))
    return np.minimum(r, cap)


def _normalize_or_uniform(v: np.ndarray) -> np.ndarray:
    # Zero vectors normalize to uniform (cold start: nothing is "hard" yet).
    total = float(np.sum(v))
    if total <= 0.0:
        return np.full(len(v), 1.0 / len(v))
    return v / total


def motion_probabilities(state: SamplerState) -> np.ndarray:
    """Assignment distribution p(m) = w_f*p_fail + w_n*p_novel + w_u*p_uni."""
    M = state.motion_count
    w_f, w_n, w_u = schedule_weights(state)
    p_fail = _normalize_or_uniform(failure_rates(state))
    p_novel = _normalize_or_uniform(1.0 / np.sqrt(state.assign_counts + 1.0))
    p_uni = np.full(M, 1.0 / M)
    p = w_f * p_fail + w_n * p_novel + w_u * p_uni
    return p / np.sum(p)


def sample_motion_ids(state: SamplerState, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n motion indices i.i.d. from p(m) (stats/diagnostics path)."""
    return rng.choice(state.motion_count, size=n, replace=True, p=motion_probabilities(state))


def select_active_pool(state: SamplerState, rng: np.random.Generator) -> np.ndarray:
    """Draw the per-epoch active pool: K distinct motions, p(m)-weighted."""
    M = state.motion_count
    K = state.cfg.active_pool or M
    if K > M:
        raise PoolTooLarge(f"active pool {K} exceeds motion count {M}")
    if K == M:
        return np.arange(M, dtype=np.int64)
    return np.sort(
        rng.choice(M, size=K, replace=False, p=motion_probabilities(state))
    ).astype(np.int64)


def remap_environments(
    state: SamplerState, pool: np.ndarray, num_envs: int, rng: np.random.Generator
) -> np.ndarray:
    """Assign environments to pool motions approximately uniformly.

    Respects the remap cadence: within remap_interval steps of the previous
    call the existing assignment is returned unchanged (and A_m untouched).
    Each pool member receives floor(E/K) or ceil(E/K) environments.
    """
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        raise PoolTooLarge("pool must be non-empty")
    if (
        state._assignment is not None
        and state._last_remap_step is not None
        and state.step - state._last_remap_step < state.cfg.remap_interval
        and len(state._assignment) == num_envs
    ):
        return state._assignment

    K = len(pool)
    base, extra = divmod(num_envs, K)
    counts = np.full(K, base, dtype=np.int64)
    if extra:
        counts[rng.choice(K, size=extra, replace=False)] += 1
    assignment = np.repeat(pool, counts)
    rng.shuffle(assignment)
    np.add.at(state.assign_counts, pool, counts)
    state._assignment = assignment
    state._last_remap_step = state.step
    return assignment


def _gaussian_kernel(sigma: float) -> np.ndarray:
    if sigma <= 0:
        return np.array([1.0])
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def bin_distribution(state: SamplerState, m: int) -> np.ndarray:
    """Smoothed, floored, normalized start-bin weights for motion m."""
    ema = state.bin_fail_ema[m]
    kernel = _gaussian_kernel(state.cfg.smooth_sigma)
    if len(ema) == 1:
        smoothed = ema.copy()
    else:
        # full convolution center-cropped to the signal length ('same' would
        # return the kernel length for wide kernels on few bins), normalized
        # by the convolved support so constant vectors stay constant at the
        # boundaries
        lo = (len(kernel) - 1) // 2
        smoothed = np.convolve(ema, kernel, mode="full")[lo : lo + len(ema)]
        support = np.convolve(np.ones_like(ema), kernel, mode="full")[lo : lo + len(ema)]
        smoothed = smoothed / support
    w = smoothed + state.cfg.floor_prob
    return w / w.sum()


def sample_start_time(state: SamplerState, m: int, rng: np.random.Generator) -> int:
    """Draw an episode start frame for motion m and count the episode (S_m).

    The bin comes from the failure-aware bin distribution; the frame is
    uniform inside the bin, clamped to L_m - 2 so at least one transition
    remains in the episode.
    """
    if not 0 <= m < state.motion_count:
        raise MotionOutOfRange(f"motion index {m} out of range")
    L = int(state.lengths[m])
    bw = state.cfg.bin_width
    k = int(rng.choice(state.num_bins(m), p=bin_distribution(state, m)))
    lo = k * bw
    hi = min((k + 1) * bw, L - 1)  # exclusive
    frame = int(rng.integers(lo, max(lo + 1, hi)))
    state.sample_counts[m] += 1
    return min(frame, L - 2)


def record_episode(state: SamplerState, m: int, start_frame: int, failed: bool) -> None:
    """Fold one finished episode into the counters and its start bin's EMA."""
    if not 0 <= m < state.motion_count:
        raise MotionOutOfRange(f"motion index {m} out of range")
    if failed:
        state.fail_counts[m] += 1
    k = state.bin_of(m, start_frame)
    d = state.cfg.ema_decay
    state.bin_fail_ema[m][k] = d * state.bin_fail_ema[m][k] + (1.0 - d) * float(failed)
