"""Small fully-connected policies with hand-rolled reverse-mode gradients.

Hidden layers use ELU, the output layer is linear, and exploration noise is
a diagonal Gaussian with one learnable log-std per action dimension.
Residual heads get a deliberately tiny final layer (small-gain init, zero
bias) so a freshly composed student starts indistinguishable from its
frozen base.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from ..errors import DimensionMismatch


def elu(x):
    neg = np.minimum(x, 0.0)
    return np.where(x > 0, x, np.expm1(neg))


def elu_grad(x):
    neg = np.minimum(x, 0.0)
    return np.where(x > 0, 1.0, np.exp(neg))


def _xavier(rng, fan_in, fan_out, gain=1.0):
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class PolicyNet:
    """MLP with ELU hidden activations and a linear output layer."""

    def __init__(self, widths, rng=None, log_std_init=0.0, _init=True):
        self.widths = list(widths)
        self.Ws: list[np.ndarray] = []
        self.bs: list[np.ndarray] = []
        if _init:
            rng = rng or np.random.default_rng(0)
            for fi, fo in zip(self.widths[:-1], self.widths[1:]):
                self.Ws.append(_xavier(rng, fi, fo))
                self.bs.append(np.zeros(fo))
        self.log_std = np.full(self.widths[-1], float(log_std_init))

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    # --- forward / backward ---

    def forward(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if obs.shape[-1] != self.in_dim:
            raise DimensionMismatch(f"obs width {obs.shape[-1]} != input {self.in_dim}")
        h = obs
        last = len(self.Ws) - 1
        for i, (W, b) in enumerate(zip(self.Ws, self.bs)):
            h = h @ W + b
            if i != last:
                h = elu(h)
        return h

    def __call__(self, obs):
        return self.forward(obs)

    def forward_cached(self, obs):
        """Forward pass keeping layer inputs and pre-activations for backprop."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        if obs.shape[-1] != self.in_dim:
            raise DimensionMismatch(f"obs width {obs.shape[-1]} != input {self.in_dim}")
        inputs, preacts = [], []
        h = obs
        last = len(self.Ws) - 1
        for i, (W, b) in enumerate(zip(self.Ws, self.bs)):
            inputs.append(h)
            z = h @ W + b
            preacts.append(z)
            h = z if i == last else elu(z)
        return h, (inputs, preacts)

    def backward(self, cache, grad_out):
        """Gradients of a scalar loss given dL/d(output), via reverse mode."""
        inputs, preacts = cache
        gWs = [None] * len(self.Ws)
        gbs = [None] * len(self.bs)
        delta = np.asarray(grad_out, dtype=np.float64)
        for i in reversed(range(len(self.Ws))):
            if i != len(self.Ws) - 1:
                delta = delta * elu_grad(preacts[i])
            gWs[i] = inputs[i].T @ delta
            gbs[i] = np.sum(delta, axis=0)
            if i > 0:
                delta = delta @ self.Ws[i].T
        return gWs, gbs

    def backward_mse(self, obs, targets):
        """(loss, grads) for the mean of squared output errors."""
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        out, cache = self.forward_cached(obs)
        if out.shape != targets.shape:
            raise DimensionMismatch(f"output {out.shape} vs targets {targets.shape}")
        diff = out - targets
        loss = float(np.mean(diff**2))
        grad_out = 2.0 * diff / diff.size
        return loss, self.backward(cache, grad_out)

    # --- parameter plumbing ---

    def params(self) -> list[np.ndarray]:
        return [*self.Ws, *self.bs, self.log_std]

    def copy(self) -> "PolicyNet":
        out = PolicyNet(self.widths, _init=False)
        out.Ws = [W.copy() for W in self.Ws]
        out.bs = [b.copy() for b in self.bs]
        out.log_std = self.log_std.copy()
        return out

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p, dtype=np.float64).tobytes())
        return h.hexdigest()


class Adam:
    """Plain Adam over a list of parameter arrays (updated in place)."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale the whole gradient set so its global L2 norm is <= max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def init_residual(widths, rng=None, out_gain=0.01) -> PolicyNet:
    """Residual head: standard hidden init, tiny final layer, bias exactly 0."""
    rng = rng or np.random.default_rng(0)
    net = PolicyNet(widths, rng=rng)
    fi, fo = net.widths[-2], net.widths[-1]
    # the gain is divided by the hidden fan-in so the summed output scale is
    # bounded by the gain itself, independent of the hidden width
    net.Ws[-1] = _xavier(rng, fi, fo, gain=out_gain / fi)
    net.bs[-1] = np.zeros(fo)
    return net


class ComposedPolicy:
    """Additive composition: student(o) = base(o) + residual(o); base frozen."""

    def __init__(self, base: PolicyNet, residual: PolicyNet):
        if base.out_dim != residual.out_dim:
            raise DimensionMismatch(
                f"action dims differ: base {base.out_dim} vs residual {residual.out_dim}"
            )
        self.base = base
        self.residual = residual

    def forward(self, obs):
        return self.base.forward(obs) + self.residual.forward(obs)

    def __call__(self, obs):
        return self.forward(obs)


def compose(base: PolicyNet, residual: PolicyNet, obs) -> np.ndarray:
    """Elementwise sum of base and residual action means."""
    return ComposedPolicy(base, residual).forward(obs)


# ---------------------------------------------------------------------------
# Checkpoint container: JSON header + float32 parameter blob
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"MOSP"


def save_policy(path, net: PolicyNet, obs_spec_hash: str = "", meta: dict | None = None):
    header = {
        "widths": net.widths,
        "activation": "elu",
        "obs_spec_hash": obs_spec_hash,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in net.params():
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_policy(path) -> tuple[PolicyNet, dict]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a policy checkpoint")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    net = PolicyNet(header["widths"], _init=False)
    cursor = 8 + hlen
    Ws, bs = [], []
    for fi, fo in zip(net.widths[:-1], net.widths[1:]):
        n = fi * fo * 4
        Ws.append(np.frombuffer(raw[cursor : cursor + n], dtype="<f4").reshape(fi, fo).astype(np.float64))
        cursor += n
    for fo in net.widths[1:]:
        n = fo * 4
        bs.append(np.frombuffer(raw[cursor : cursor + n], dtype="<f4").astype(np.float64))
        cursor += n
    n = net.widths[-1] * 4
    net.log_std = np.frombuffer(raw[cursor : cursor + n], dtype="<f4").astype(np.float64)
    net.Ws, net.bs = Ws, bs
    return net, header
