import numpy as np
import pytest

from mosaic.errors import BufferNotFull, NoMatches
from mosaic.teleop import (
    PRESETS,
    ChannelConfig,
    ReferenceAssembler,
    SmootherState,
    ema_step,
    estimate_velocity,
    measure_delay,
    one_step_reference,
    push_sample,
    simulate_pipeline,
    transmit,
)


def make_frames(n, dt=0.02, dof=6, fn=None):
    rng = np.random.default_rng(0)
    out = []
    for k in range(n):
        jp = fn(k * dt) if fn is not None else rng.normal(size=dof)
        out.append((k * dt, np.asarray(jp, dtype=float), np.array([1.0, 0, 0, 0])))
    return out


class TestTransmit:
    def test_pure_delay(self):
        frames = make_frames(100)
        pkts = transmit(frames, ChannelConfig(base_latency=0.4), np.random.default_rng(1))
        assert len(pkts) == 100
        for p in pkts:
            assert p.t_recv - p.t_sent == pytest.approx(0.4, abs=1e-12)

    def test_identity_channel(self):
        frames = make_frames(10)
        pkts = transmit(frames, ChannelConfig(), np.random.default_rng(2))
        for p, (t, jp, rq) in zip(pkts, frames):
            assert p.t_recv == t
            assert np.array_equal(p.joint_pos, jp)  # payload bit-exact
            assert np.array_equal(p.root_quat, rq)

    def test_drop_rate_binomial(self):
        frames = make_frames(100_000)
        pkts = transmit(frames, ChannelConfig(drop_rate=0.1), np.random.default_rng(3))
        frac = len(pkts) / 100_000
        assert abs(frac - 0.9) < 0.005

    def test_negative_jitter_clamped_causal(self):
        frames = make_frames(2000)
        pkts = transmit(frames, ChannelConfig(base_latency=0.01, jitter_std=0.1),
                        np.random.default_rng(4))
        for p in pkts:
            assert p.t_recv >= p.t_sent

    def test_sorted_by_arrival(self):
        frames = make_frames(500)
        pkts = transmit(frames, ChannelConfig(base_latency=0.05, jitter_std=0.05),
                        np.random.default_rng(5))
        times = [p.t_recv for p in pkts]
        assert times == sorted(times)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            ChannelConfig(drop_rate=1.0).validate()
        with pytest.raises(ValueError):
            ChannelConfig(base_latency=-1.0).validate()


class TestEma:
    def test_passthrough_alpha_one(self):
        s = SmootherState(ema_alpha=1.0)
        x = np.array([1.0, -2.0])
        assert np.array_equal(ema_step(s, x), x)

    def test_recursion(self):
        s = SmootherState(ema_alpha=0.5)
        ema_step(s, np.array([0.0]))
        assert ema_step(s, np.array([1.0]))[0] == pytest.approx(0.5)
        assert ema_step(s, np.array([1.0]))[0] == pytest.approx(0.75)

    def test_constant_fixed_point(self):
        s = SmootherState(ema_alpha=0.3)
        for _ in range(50):
            y = ema_step(s, np.array([2.5]))
        assert y[0] == pytest.approx(2.5)

    def test_convex_combination_bounds(self):
        rng = np.random.default_rng(6)
        s = SmootherState(ema_alpha=0.3)
        hist = []
        for _ in range(100):
            x = rng.normal(size=3)
            hist.append(x)
            y = ema_step(s, x)
            h = np.array(hist)
            assert np.all(y <= h.max(0) + 1e-12) and np.all(y >= h.min(0) - 1e-12)

    def test_bad_params(self):
        with pytest.raises(ValueError):
            SmootherState(ema_alpha=0.0)
        with pytest.raises(ValueError):
            SmootherState(window=4)


class TestCentralDifference:
    def test_linear_ramp(self):
        s = SmootherState(ema_alpha=1.0, window=3)
        for k, x in enumerate([0.0, 0.02, 0.04]):
            push_sample(s, k * 0.02, np.array([x]))
        assert estimate_velocity(s)[0] == pytest.approx(1.0, abs=1e-12)

    def test_constant_zero(self):
        s = SmootherState(ema_alpha=1.0, window=5)
        for k in range(5):
            push_sample(s, k * 0.02, np.array([3.3]))
        assert estimate_velocity(s)[0] == 0.0

    def test_quadratic_exact_at_center(self):
        s = SmootherState(ema_alpha=1.0, window=3)
        for k in range(3):
            t = k * 0.02
            push_sample(s, t, np.array([t * t]))
        # derivative of t^2 at the center t=0.02 is 0.04, exact
        assert estimate_velocity(s)[0] == pytest.approx(0.04, abs=1e-15)

    def test_affine_exact_window5(self):
        s = SmootherState(ema_alpha=1.0, window=5)
        for k in range(5):
            t = k * 0.01
            push_sample(s, t, np.array([2.0 * t - 1.0]))
        assert estimate_velocity(s)[0] == pytest.approx(2.0, abs=1e-12)

    def test_buffer_not_full(self):
        s = SmootherState(window=5)
        push_sample(s, 0.0, np.array([0.0]))
        with pytest.raises(BufferNotFull):
            estimate_velocity(s)


class TestMeasureDelay:
    def test_two_stage_vr_preset(self):
        frames = make_frames(10_000)
        cfgs = [ChannelConfig(base_latency=PRESETS["vr"][0], jitter_std=0.01),
                ChannelConfig(base_latency=PRESETS["vr"][1], jitter_std=0.01)]
        _, stats = simulate_pipeline(frames, cfgs, np.random.default_rng(7))
        assert stats.mean == pytest.approx(0.400, abs=0.005)
        assert sum(stats.stage_means) == pytest.approx(stats.mean, abs=1e-9)

    def test_two_stage_mocap_preset_and_ordering(self):
        frames = make_frames(10_000)
        stats_by = {}
        for name in ("vr", "mocap"):
            cfgs = [ChannelConfig(base_latency=PRESETS[name][0], jitter_std=0.01),
                    ChannelConfig(base_latency=PRESETS[name][1], jitter_std=0.01)]
            _, stats = simulate_pipeline(frames, cfgs, np.random.default_rng(8))
            stats_by[name] = stats
        assert stats_by["mocap"].mean == pytest.approx(0.200, abs=0.005)
        assert stats_by["mocap"].mean < stats_by["vr"].mean

    def test_single_stage_stats(self):
        frames = make_frames(5000)
        pkts = transmit(frames, ChannelConfig(base_latency=0.1, jitter_std=0.02),
                        np.random.default_rng(9))
        stats = measure_delay(frames_to_sent(frames), pkts)
        assert stats.mean == pytest.approx(0.1, abs=3 * 0.02 / np.sqrt(len(pkts)) + 1e-3)
        assert stats.p95 >= stats.mean

    def test_no_matches(self):
        frames = make_frames(5)
        pkts = transmit(frames, ChannelConfig(), np.random.default_rng(10))
        with pytest.raises(NoMatches):
            measure_delay({99: 0.0}, pkts)


def frames_to_sent(frames):
    return {i: t for i, (t, _, _) in enumerate(frames)}


class TestOneStepReference:
    def test_lossless_identity(self):
        frames = make_frames(50, fn=lambda t: [np.sin(t), np.cos(t)])
        pkts = transmit(frames, ChannelConfig(), np.random.default_rng(11))
        asm = ReferenceAssembler(pkts, SmootherState(ema_alpha=1.0, window=3))
        for k, (t, jp, _) in enumerate(frames):
            p, v, q = asm.tick(t)
            assert np.array_equal(p, jp)

    def test_zero_order_hold_on_gap(self):
        frames = make_frames(20)
        pkts = transmit(frames, ChannelConfig(), np.random.default_rng(12))
        del pkts[10]  # drop one packet
        asm = ReferenceAssembler(pkts, SmootherState(ema_alpha=1.0, window=3))
        p9, _, _ = asm.tick(frames[9][0])
        p10, _, _ = asm.tick(frames[9][0] + 1e-9)   # nothing new yet
        assert np.array_equal(p9, p10)
        asm.tick(frames[11][0])
        assert asm.gaps == [1]

    def test_single_shot_form(self):
        frames = make_frames(10)
        pkts = transmit(frames, ChannelConfig(), np.random.default_rng(13))
        p, v, q = one_step_reference(pkts, SmootherState(ema_alpha=1.0, window=3), 0.1)
        assert np.array_equal(p, frames[5][1])

    def test_lag_via_cross_correlation(self):
        dt = 0.02
        lag = 0.4
        frames = make_frames(800, dt=dt, fn=lambda t: [t])  # unit ramp
        pkts = transmit(frames, ChannelConfig(base_latency=lag), np.random.default_rng(14))
        asm = ReferenceAssembler(pkts, SmootherState(ema_alpha=1.0, window=3))
        outs = []
        for k in range(800):
            try:
                p, _, _ = asm.tick(k * dt)
            except BufferNotFull:
                p = np.array([0.0])
            outs.append(p[0])
        outs = np.array(outs)
        ins = np.arange(800) * dt
        # on a unit-slope ramp the steady-state offset equals the lag
        steady = ins[100:] - outs[100:]
        assert np.mean(steady) == pytest.approx(lag, abs=dt)
