"""Periodic-motion model: explicit phase dynamics + Fourier-basis decoder.

A motion segment is summarized by a scalar gait frequency f, a phase
variable advanced in closed form, and quasi time-invariant style
coefficients (per-channel DC offset plus amplitude/phase-shift per
harmonic). The decoder is an explicit Fourier basis fitted by linear least
squares; frequency comes from a periodogram peak refined against the
full-basis residual, so refitting a model's own output is a projection.

Phase unit note: the phase increment per step is 2*pi*f*dt radians (f in
Hz); phases are stored in radians and wrapped to [0, 2*pi).

The state channels follow the tracking stack's conventions: base linear
velocity (3), base angular velocity (3), base height (1), projected gravity
in the base frame (3), then joint positions — 10 + J channels.

Style vectors from many segments are modeled with a diagonal-covariance
GMM; sampling a style (which includes its frequency) and rolling the phase
synthesizes arbitrarily long periodic clips.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import NoPeriodicity, TooFewSamples, TrajTooShort
from .motion_bank import MotionClip
from .robot import RobotModel, body_velocities, default_model, fk

TWO_PI = 2.0 * np.pi


def propagate_phase(phi0: float, freq: float, dt: float, k) -> np.ndarray:
    """Phase after k steps: (phi0 + 2*pi*k*f*dt) wrapped to [0, 2*pi)."""
    k = np.asarray(k, dtype=np.float64)
    phi = phi0 + TWO_PI * k * freq * dt
    out = np.mod(phi, TWO_PI)
    return out if out.ndim else float(out)


@dataclass
class FldModel:
    freq: float               # Hz
    dt: float
    offsets: np.ndarray       # (C,)
    amps: np.ndarray          # (C, H)
    phases: np.ndarray        # (C, H)

    @property
    def n_channels(self) -> int:
        return len(self.offsets)

    @property
    def n_harmonics(self) -> int:
        return self.amps.shape[1]

    def theta(self) -> np.ndarray:
        """Flat style vector [freq, offsets, amps, phases]."""
        return np.concatenate(
            [[self.freq], self.offsets, self.amps.ravel(), self.phases.ravel()]
        )

    @classmethod
    def from_theta(cls, vec: np.ndarray, n_channels: int, n_harmonics: int,
                   dt: float) -> "FldModel":
        C, H = n_channels, n_harmonics
        freq = float(vec[0])
        off = vec[1 : 1 + C]
        amps = vec[1 + C : 1 + C + C * H].reshape(C, H)
        phases = vec[1 + C + C * H :].reshape(C, H)
        return cls(freq, dt, off.copy(), np.abs(amps), phases.copy())


def decode(phi, model: FldModel) -> np.ndarray:
    """State at phase phi: offset_c + sum_h a_{c,h} sin(h*phi + psi_{c,h})."""
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    h = np.arange(1, model.n_harmonics + 1)
    arg = h[None, None, :] * phi[:, None, None] + model.phases[None, :, :]
    out = model.offsets[None, :] + np.sum(model.amps[None, :, :] * np.sin(arg), axis=-1)
    return out[0] if out.shape[0] == 1 and np.isscalar(phi) else out


def decode_rate(phi, model: FldModel) -> np.ndarray:
    """Analytic time derivative of decode along the propagated phase."""
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    h = np.arange(1, model.n_harmonics + 1)
    arg = h[None, None, :] * phi[:, None, None] + model.phases[None, :, :]
    dphi_dt = TWO_PI * model.freq
    return np.sum(model.amps[None, :, :] * h[None, None, :] * np.cos(arg), axis=-1) * dphi_dt


def fld_losses(traj: np.ndarray, model: FldModel, K: int, alpha: float = 1.0,
               lambda_phase: float = 1.0, phi0: float = 0.0,
               phases: np.ndarray | None = None):
    """(L_rec, L_phase, L_total) on a state trajectory.

    L_rec discounts the squared reconstruction error over the K-step horizon
    by alpha^k (alpha = 1 keeps the full horizon flat; alpha = 0 keeps only
    k = 0 under the 0^0 = 1 convention). L_phase penalizes per-step phase
    increments that deviate from 2*pi*f*dt; `phases` defaults to the exact
    propagation, which zeroes it by construction.
    """
    traj = np.atleast_2d(np.asarray(traj, dtype=np.float64))
    if traj.shape[0] < K + 1:
        raise TrajTooShort(f"need {K + 1} frames, got {traj.shape[0]}")
    ks = np.arange(K + 1)
    phi = propagate_phase(phi0, model.freq, model.dt, ks)
    recon = decode(phi, model)
    weights = np.where(ks == 0, 1.0, alpha**ks)
    l_rec = float(np.sum(weights * np.sum((recon - traj[: K + 1]) ** 2, axis=-1)))

    if phases is None:
        phases = propagate_phase(phi0, model.freq, model.dt, np.arange(traj.shape[0]))
    phases = np.asarray(phases, dtype=np.float64)
    dphi = quat.wrap_angle(np.diff(phases) - TWO_PI * model.freq * model.dt)
    l_phase = float(np.sum(dphi**2))
    return l_rec, l_phase, l_rec + lambda_phase * l_phase


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _design(phi: np.ndarray, n_harmonics: int) -> np.ndarray:
    cols = [np.ones_like(phi)]
    for h in range(1, n_harmonics + 1):
        cols.append(np.sin(h * phi))
        cols.append(np.cos(h * phi))
    return np.stack(cols, axis=-1)


def _residual(states: np.ndarray, freq: float, dt: float, n_harmonics: int) -> float:
    phi = TWO_PI * freq * dt * np.arange(states.shape[0])
    X = _design(phi, n_harmonics)
    coef, _, _, _ = np.linalg.lstsq(X, states, rcond=None)
    return float(np.sum((X @ coef - states) ** 2))


def estimate_frequency(states: np.ndarray, dt: float, n_harmonics: int = 4,
                       pad: int = 1 << 13) -> float:
    """Dominant gait frequency: windowed periodogram peak, then a
    deterministic local search + parabolic refinement of the least-squares
    residual (exact basis -> the refined minimum sits at the true frequency).
    """
    T = states.shape[0]
    x = states - np.mean(states, axis=0)
    power_total = float(np.sum(x**2))
    if power_total < 1e-12:
        raise NoPeriodicity("trajectory is constant")
    win = np.hanning(T)[:, None]
    spec = np.abs(np.fft.rfft(x * win, n=pad, axis=0)) ** 2
    power = np.sum(spec, axis=-1)
    freqs = np.fft.rfftfreq(pad, d=dt)
    # at least one full cycle must fit; stay away from Nyquist
    band = (freqs >= 1.0 / (T * dt)) & (freqs <= 0.45 / dt)
    if not np.any(band):
        raise NoPeriodicity("no admissible frequency band")
    p_band = np.where(band, power, 0.0)
    peak = int(np.argmax(p_band))
    if p_band[peak] < 5.0 * np.mean(p_band[band]):
        raise NoPeriodicity("spectrum has no dominant peak")
    f0 = float(freqs[peak])

    # The peak may sit on a harmonic when the fundamental is weak, so try
    # subharmonic candidates against the full-basis residual; prefer the
    # highest candidate on (near-)ties so pure tones are not halved.
    f_lo = 1.0 / (T * dt)
    best, best_val = None, np.inf
    for k in range(1, max(3, n_harmonics) + 1):
        cand = f0 / k
        if cand < f_lo:
            break
        val = _residual(states, cand, dt, n_harmonics)
        # a subharmonic must buy a real residual reduction, not float noise
        if val < best_val - 1e-9 * power_total:
            best, best_val = cand, val

    # local grid refinement against the full-basis residual
    half = float(freqs[1] - freqs[0]) * 4.0
    for _ in range(4):
        grid = np.linspace(best - half, best + half, 21)
        grid = grid[grid > 0]
        vals = [_residual(states, f, dt, n_harmonics) for f in grid]
        best = float(grid[int(np.argmin(vals))])
        half /= 8.0
    # parabolic finish on the residual around the best grid point
    h = max(best * 1e-6, 1e-9)
    r0, r1, r2 = (_residual(states, f, dt, n_harmonics) for f in (best - h, best, best + h))
    denom = r0 - 2.0 * r1 + r2
    if denom > 0:
        best = best + 0.5 * h * (r0 - r2) / denom
    return best


def fit_model(segment: np.ndarray, dt: float, n_harmonics: int = 4,
              freq: float | None = None) -> FldModel:
    """Fit one gait segment: frequency from the spectrum (unless given),
    style coefficients by linear least squares on the Fourier basis."""
    segment = np.atleast_2d(np.asarray(segment, dtype=np.float64))
    T = segment.shape[0]
    if T < 2 * n_harmonics + 2:
        raise TrajTooShort(f"{T} frames cannot support {n_harmonics} harmonics")
    f = estimate_frequency(segment, dt, n_harmonics) if freq is None else float(freq)
    phi = TWO_PI * f * dt * np.arange(T)
    X = _design(phi, n_harmonics)
    coef, _, _, _ = np.linalg.lstsq(X, segment, rcond=None)
    C = segment.shape[1]
    offsets = coef[0].copy()
    amps = np.zeros((C, n_harmonics))
    phases = np.zeros((C, n_harmonics))
    for h in range(n_harmonics):
        s, c = coef[1 + 2 * h], coef[2 + 2 * h]
        amps[:, h] = np.hypot(s, c)
        phases[:, h] = np.where(amps[:, h] > 1e-12, np.arctan2(c, s), 0.0)
    return FldModel(f, dt, offsets, amps, phases)


def fit_models(segments, dt: float, n_harmonics: int = 4) -> list[FldModel]:
    return [fit_model(seg, dt, n_harmonics) for seg in segments]


# ---------------------------------------------------------------------------
# Style distribution (diagonal GMM via EM)
# ---------------------------------------------------------------------------

@dataclass
class GmmStyle:
    weights: np.ndarray    # (K,)
    means: np.ndarray      # (K, D)
    variances: np.ndarray  # (K, D)
    n_channels: int = 0
    n_harmonics: int = 0
    dt: float = 0.02

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        k = int(rng.choice(len(self.weights), p=self.weights))
        return self.means[k] + np.sqrt(self.variances[k]) * rng.standard_normal(
            self.means.shape[1]
        )

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        lp = _component_logpdf(x, self.means, self.variances) + np.log(self.weights)
        m = np.max(lp, axis=-1, keepdims=True)
        return (m + np.log(np.sum(np.exp(lp - m), axis=-1, keepdims=True)))[:, 0]


def _component_logpdf(x, means, variances):
    # (N, K): diagonal Gaussian log density per component
    d = x[:, None, :] - means[None, :, :]
    return -0.5 * np.sum(
        d * d / variances[None] + np.log(TWO_PI * variances[None]), axis=-1
    )


VAR_FLOOR = 1e-6


def fit_gmm(thetas: np.ndarray, components: int, rng: np.random.Generator,
            max_iter: int = 200, tol: float = 1e-8, layout: tuple = (0, 0, 0.02)
            ) -> GmmStyle:
    """Diagonal-covariance EM until the log-likelihood change drops below tol."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    N, D = thetas.shape
    if N < components:
        raise TooFewSamples(f"{N} samples < {components} components")

    idx = rng.choice(N, size=components, replace=False)
    means = thetas[idx].copy()
    variances = np.tile(np.maximum(np.var(thetas, axis=0), VAR_FLOOR), (components, 1))
    weights = np.full(components, 1.0 / components)

    prev_ll = -np.inf
    for _ in range(max_iter):
        lp = _component_logpdf(thetas, means, variances) + np.log(weights)
        m = np.max(lp, axis=-1, keepdims=True)
        log_norm = m + np.log(np.sum(np.exp(lp - m), axis=-1, keepdims=True))
        ll = float(np.sum(log_norm))
        resp = np.exp(lp - log_norm)  # (N, K)

        nk = np.sum(resp, axis=0) + 1e-12
        weights = nk / N
        means = (resp.T @ thetas) / nk[:, None]
        sq = resp.T @ (thetas**2) / nk[:, None] - means**2
        variances = np.maximum(sq, VAR_FLOOR)
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll
    return GmmStyle(weights, means, variances,
                    n_channels=layout[0], n_harmonics=layout[1], dt=layout[2])


# ---------------------------------------------------------------------------
# State extraction and synthesis
# ---------------------------------------------------------------------------

def clip_to_states(clip: MotionClip, anchor_body: int = 0) -> np.ndarray:
    """Stack a clip into the model's state channels (10 + J wide)."""
    lin = clip.body_lin_vel_w[:, anchor_body, :].astype(np.float64)
    ang = clip.body_ang_vel_w[:, anchor_body, :].astype(np.float64)
    height = clip.body_pos_w[:, anchor_body, 2:3].astype(np.float64)
    q = clip.body_quat_w[:, anchor_body, :].astype(np.float64)
    down = np.array([0.0, 0.0, -1.0])
    grav = quat.rotate_vec(quat.quat_conj(q), np.broadcast_to(down, (len(q), 3)))
    return np.concatenate([lin, ang, height, grav, clip.joint_pos.astype(np.float64)], axis=-1)


def synthesize(gmm: GmmStyle, duration: float, dt: float,
               rng: np.random.Generator, model: RobotModel | None = None,
               label: str = "synth") -> MotionClip:
    """Sample a style, roll the phase, decode, and assemble a MotionClip.

    World x/y come from integrating the decoded base velocities, z from the
    height channel; joint velocities are the analytic harmonic derivatives;
    body kinematics come from the toy chain's forward kinematics.
    """
    model = model or default_model()
    J = model.dof
    C = 10 + J
    theta = gmm.sample(rng)
    fld = FldModel.from_theta(theta, C, gmm.n_harmonics, dt)
    phi0 = rng.uniform(0.0, TWO_PI)

    steps = int(round(duration / dt))
    phi = propagate_phase(phi0, fld.freq, dt, np.arange(steps))
    states = decode(phi, fld)
    rates = decode_rate(phi, fld)

    lin_vel = states[:, 0:3]
    pitch_rate = states[:, 4]
    height = states[:, 6]
    grav = states[:, 7:10]
    joints = states[:, 10:]
    joint_vel = rates[:, 10:]
    pitch = np.arctan2(grav[:, 0], -grav[:, 2])

    x = np.concatenate([[0.0], np.cumsum(lin_vel[:-1, 0]) * dt])
    y = np.concatenate([[0.0], np.cumsum(lin_vel[:-1, 1]) * dt])
    vz = rates[:, 6]

    base_xz = np.stack([x, height], axis=-1)
    pos2, ang = fk(base_xz, pitch, joints, model)
    qdot = np.concatenate(
        [lin_vel[:, 0:1], vz[:, None], pitch_rate[:, None], joint_vel], axis=-1
    )
    lin2, angv = body_velocities(pitch, joints, qdot, model)

    B = model.num_bodies
    body_pos = np.zeros((steps, B, 3), dtype=np.float32)
    body_pos[:, :, 0] = pos2[..., 0]
    body_pos[:, :, 1] = y[:, None]
    body_pos[:, :, 2] = pos2[..., 1]
    body_quat = quat.quat_about_y(ang).astype(np.float32)
    body_lin = np.zeros((steps, B, 3), dtype=np.float32)
    body_lin[:, :, 0] = lin2[..., 0]
    body_lin[:, :, 1] = lin_vel[:, 1:2]
    body_lin[:, :, 2] = lin2[..., 1]
    body_ang = np.zeros((steps, B, 3), dtype=np.float32)
    body_ang[:, :, 1] = angv

    return MotionClip(
        fps=1.0 / dt,
        joint_pos=joints.astype(np.float32),
        joint_vel=joint_vel.astype(np.float32),
        body_pos_w=body_pos,
        body_quat_w=body_quat,
        body_lin_vel_w=body_lin,
        body_ang_vel_w=body_ang,
        label=label,
        source_id="fld_synth",
    ).validate()
