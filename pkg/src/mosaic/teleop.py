"""Teleoperation reference channel and onboard signal processing.

The channel delays each packet by base latency plus Gaussian jitter (clamped
at zero — causality), drops packets independently, and delivers in receive
order unless reordering is allowed. Payloads pass through bit-exact.

Onboard processing mirrors the consumer side of a live stream: EMA smoothing
on joint positions, velocities from a central difference over a rolling
position buffer, and a zero-order hold whenever no new packet arrived this
tick. Delay statistics support chained stages (device -> workstation ->
robot) with additive accounting; the shipped presets are 0.267 + 0.133 s
(VR) and 0.067 + 0.133 s (inertial MoCap).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BufferNotFull, NoMatches
from .motion_bank import MotionBank

# (stage1, stage2) mean one-way latency in seconds
PRESETS = {
    "vr": (0.267, 0.133),
    "mocap": (0.067, 0.133),
}


@dataclass
class StreamPacket:
    seq: int
    t_sent: float
    t_recv: float
    joint_pos: np.ndarray
    root_quat: np.ndarray


@dataclass
class ChannelConfig:
    base_latency: float = 0.0   # s
    jitter_std: float = 0.0     # s
    drop_rate: float = 0.0
    reorder: bool = False

    def validate(self) -> "ChannelConfig":
        if self.base_latency < 0:
            raise ValueError("base_latency must be >= 0")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must be in [0, 1)")
        return self


def transmit(
    frames: list[tuple[float, np.ndarray, np.ndarray]],
    cfg: ChannelConfig,
    rng: np.random.Generator,
) -> list[StreamPacket]:
    """Push timestamped (t, joint_pos, root_quat) frames through the channel.

    Returns the delivered packets, sorted by arrival time unless cfg.reorder
    allows out-of-order delivery (then source order is kept).
    """
    cfg.validate()
    delivered = []
    for seq, (t, jp, rq) in enumerate(frames):
        if cfg.drop_rate > 0 and rng.random() < cfg.drop_rate:
            continue
        delay = cfg.base_latency
        if cfg.jitter_std > 0:
            delay += rng.normal(0.0, cfg.jitter_std)
        delay = max(0.0, delay)
        delivered.append(StreamPacket(seq, t, t + delay, np.asarray(jp), np.asarray(rq)))
    if not cfg.reorder:
        delivered.sort(key=lambda p: (p.t_recv, p.seq))
    return delivered


@dataclass
class SmootherState:
    """EMA state plus the rolling buffer the velocity estimator reads."""

    ema_alpha: float = 0.3
    window: int = 5             # odd, >= 3
    ema: np.ndarray | None = None
    buf: list = field(default_factory=list)       # [(t, smoothed positions)]

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must be in (0, 1]")


def ema_step(state: SmootherState, x: np.ndarray) -> np.ndarray:
    """One EMA update; the first sample seeds the average."""
    x = np.asarray(x, dtype=np.float64)
    if state.ema is None:
        state.ema = x.copy()
    else:
        state.ema = state.ema_alpha * x + (1.0 - state.ema_alpha) * state.ema
    return state.ema.copy()


def push_sample(state: SmootherState, t: float, x: np.ndarray) -> np.ndarray:
    """EMA-smooth one sample and append it to the rolling buffer."""
    y = ema_step(state, x)
    state.buf.append((float(t), y))
    if len(state.buf) > state.window:
        state.buf.pop(0)
    return y


def estimate_velocity(state: SmootherState) -> np.ndarray:
    """Central difference at the buffer's center sample.

    Exact for affine and quadratic trajectories at the center point.
    """
    if len(state.buf) < state.window:
        raise BufferNotFull(f"buffer holds {len(state.buf)}/{state.window} samples")
    k = state.window // 2
    t_lo, x_lo = state.buf[k - 1]
    t_hi, x_hi = state.buf[k + 1]
    return (x_hi - x_lo) / (t_hi - t_lo)


@dataclass
class DelayStats:
    mean: float
    std: float
    p95: float
    count: int
    stage_means: tuple[float, ...] = ()


def measure_delay(sent, received) -> DelayStats:
    """Delay statistics over packets matched by sequence number.

    `sent` maps seq -> t_sent (dict, or packet list); `received` is the
    delivered packet list.
    """
    if not isinstance(sent, dict):
        sent = {p.seq: p.t_sent for p in sent}
    delays = [p.t_recv - sent[p.seq] for p in received if p.seq in sent]
    if not delays:
        raise NoMatches("no common sequence numbers")
    d = np.asarray(delays)
    return DelayStats(
        mean=float(np.mean(d)),
        std=float(np.std(d)),
        p95=float(np.percentile(d, 95)),
        count=len(d),
    )


def simulate_pipeline(
    frames, stage_cfgs: list[ChannelConfig], rng: np.random.Generator
) -> tuple[list[list[StreamPacket]], DelayStats]:
    """Chain channel stages; each stage re-sends at its arrival times.

    Returns per-stage delivery logs and end-to-end stats whose stage_means
    add up to the total (additive accounting).
    """
    logs = []
    current = list(frames)
    stage_means = []
    # transmit() renumbers seq per stage, so track each packet's original seq
    orig_seq = list(range(len(frames)))
    for cfg in stage_cfgs:
        packets = transmit(current, cfg, rng)
        logs.append(packets)
        stage_means.append(float(np.mean([p.t_recv - p.t_sent for p in packets])))
        current = [(p.t_recv, p.joint_pos, p.root_quat) for p in packets]
        orig_seq = [orig_seq[p.seq] for p in packets]
    first_sent = {i: t for i, (t, _, _) in enumerate(frames)}
    d = np.asarray(
        [p.t_recv - first_sent[orig_seq[i]] for i, p in enumerate(logs[-1])]
    )
    stats = DelayStats(
        mean=float(np.mean(d)),
        std=float(np.std(d)),
        p95=float(np.percentile(d, 95)),
        count=len(d),
        stage_means=tuple(stage_means),
    )
    return logs, stats


class ReferenceAssembler:
    """Consumes delivered packets and produces one reference frame per tick.

    Latest-delivered packet wins; its joints are EMA-smoothed and buffered
    for the central-difference velocity. With no new packet the previous
    frame is held (zero-order hold) and the seq gap is logged.
    """

    def __init__(self, packets: list[StreamPacket], smoother: SmootherState):
        self.packets = sorted(packets, key=lambda p: (p.t_recv, p.seq))
        self.smoother = smoother
        self.cursor = 0
        self.last_seq = -1
        self.holds = 0
        self.gaps: list[int] = []
        self._joint_pos = None
        self._joint_vel = None
        self._root_quat = None

    def tick(self, now: float):
        """Reference (joint_pos, joint_vel, root_quat) at wall time `now`."""
        advanced = False
        latest = None
        while self.cursor < len(self.packets) and self.packets[self.cursor].t_recv <= now:
            latest = self.packets[self.cursor]
            self.cursor += 1
            advanced = True
        if advanced and latest is not None:
            if latest.seq > self.last_seq + 1 and self.last_seq >= 0:
                self.gaps.append(latest.seq - self.last_seq - 1)
            self.last_seq = latest.seq
            self._joint_pos = push_sample(self.smoother, latest.t_recv, latest.joint_pos)
            self._root_quat = latest.root_quat
            try:
                self._joint_vel = estimate_velocity(self.smoother)
            except BufferNotFull:
                self._joint_vel = np.zeros_like(self._joint_pos)
        elif self._joint_pos is None:
            raise BufferNotFull("no packet delivered yet")
        else:
            self.holds += 1
        return self._joint_pos, self._joint_vel, self._root_quat


def one_step_reference(packets, smoother: SmootherState, clock: float):
    """Single-shot form of ReferenceAssembler.tick for a fixed clock time."""
    return ReferenceAssembler(packets, smoother).tick(clock)


def stream_bank_references(
    bank: MotionBank,
    channel: ChannelConfig,
    smoother_alpha: float = 0.3,
    window: int = 5,
    noise_std: float = 0.0,
    anchor_body: int = 0,
    seed: int = 0,
):
    """Build a delayed/smoothed observation view of every bank motion.

    Each motion's reference sequence is streamed through the channel once;
    the assembled per-tick output (with zero-order holds where packets are
    missing or late) is returned as row-aligned arrays for TrackingEnv's
    obs_stream. Noise is added to the payload before smoothing.
    """
    from .sim_env import StreamedReference

    rng = np.random.default_rng(seed)
    dt = 1.0 / bank.fps
    out_pos = np.zeros_like(bank.joint_pos, dtype=np.float64)
    out_vel = np.zeros_like(bank.joint_vel, dtype=np.float64)
    out_quat = np.zeros((bank.total_rows, 4))
    for m in range(bank.motion_count):
        o, L = int(bank.offsets[m]), int(bank.lengths[m])
        jp = bank.joint_pos[o : o + L].astype(np.float64)
        rq = bank.body_quat_w[o : o + L, anchor_body, :].astype(np.float64)
        if noise_std > 0:
            jp = jp + rng.normal(0.0, noise_std, size=jp.shape)
        frames = [(k * dt, jp[k], rq[k]) for k in range(L)]
        packets = transmit(frames, channel, rng)
        asm = ReferenceAssembler(packets, SmootherState(smoother_alpha, window))
        pos_prev = jp[0]
        vel_prev = np.zeros(bank.dof)
        quat_prev = rq[0]
        for k in range(L):
            try:
                p, v, q = asm.tick(k * dt)
                pos_prev, vel_prev, quat_prev = p, v, q
            except BufferNotFull:
                pass  # nothing delivered yet: hold the initial frame
            out_pos[o + k] = pos_prev
            out_vel[o + k] = vel_prev
            out_quat[o + k] = quat_prev
    return StreamedReference(out_pos, out_vel, out_quat)
