"""Motion clip container and the contiguous training-time motion store.

A clip lives on disk as a single ``.mbank`` file: magic ``MOSB``, a u32
little-endian header length, a UTF-8 JSON header ``{fps, dof, bodies,
frames, fields: [{name, shape}], label, source_id}`` and then one
little-endian float32 payload per field, in header order. Quaternions are
scalar-first [w, x, y, z] (stated in the header for consumers).

All clips of a bank are concatenated into per-field arrays with cumulative
offsets, so any (motion, frame) pair maps to one global row and batched
window queries become plain indexed gathers with no per-step file I/O.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .errors import (
    BadRank,
    BadRate,
    EmptyBank,
    HeterogeneousSchema,
    MalformedFile,
    MotionOutOfRange,
)

MAGIC = b"MOSB"

# Field name -> trailing shape builder given (dof, bodies). Frames prepend.
FIELD_ORDER = (
    "joint_pos",
    "joint_vel",
    "body_pos_w",
    "body_quat_w",
    "body_lin_vel_w",
    "body_ang_vel_w",
)


def _field_shape(name: str, frames: int, dof: int, bodies: int) -> tuple[int, ...]:
    if name in ("joint_pos", "joint_vel"):
        return (frames, dof)
    if name == "body_quat_w":
        return (frames, bodies, 4)
    return (frames, bodies, 3)


@dataclass
class MotionClip:
    """One reference motion in robot space at a fixed frame rate."""

    fps: float
    joint_pos: np.ndarray       # (L, J) rad
    joint_vel: np.ndarray       # (L, J) rad/s
    body_pos_w: np.ndarray      # (L, B, 3) m, world frame
    body_quat_w: np.ndarray     # (L, B, 4) unit wxyz
    body_lin_vel_w: np.ndarray  # (L, B, 3) m/s
    body_ang_vel_w: np.ndarray  # (L, B, 3) rad/s
    label: str = ""
    source_id: str = "unknown"

    @property
    def length(self) -> int:
        return self.joint_pos.shape[0]

    @property
    def dof(self) -> int:
        return self.joint_pos.shape[1]

    @property
    def bodies(self) -> int:
        return self.body_pos_w.shape[1]

    def validate(self) -> "MotionClip":
        """Check the clip invariants; returns self so calls chain."""
        if not self.fps > 0:
            raise BadRate(f"fps must be > 0, got {self.fps}")
        L, J, B = self.length, self.dof, self.bodies
        if L < 2:
            raise MalformedFile(f"clip needs at least 2 frames, got {L}")
        expect = {
            "joint_pos": (L, J),
            "joint_vel": (L, J),
            "body_pos_w": (L, B, 3),
            "body_quat_w": (L, B, 4),
            "body_lin_vel_w": (L, B, 3),
            "body_ang_vel_w": (L, B, 3),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise MalformedFile(f"field {name} has shape {arr.shape}, expected {shape}")
        quat.check_unit(self.body_quat_w)
        return self


def write_clip(path: str | os.PathLike, clip: MotionClip) -> None:
    """Serialize a validated clip to the single-file container format."""
    clip.validate()
    header = {
        "fps": float(clip.fps),
        "dof": clip.dof,
        "bodies": clip.bodies,
        "frames": clip.length,
        "fields": [
            {"name": name, "shape": list(getattr(clip, name).shape)} for name in FIELD_ORDER
        ],
        "label": clip.label,
        "source_id": clip.source_id,
        "quat_convention": "wxyz",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in FIELD_ORDER:
            f.write(np.ascontiguousarray(getattr(clip, name), dtype="<f4").tobytes())


def ingest_clip(path: str | os.PathLike) -> MotionClip:
    """Load and validate one ``.mbank`` clip file."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise MalformedFile(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise MalformedFile(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"{path}: unreadable header ({exc})") from exc

    for key in ("fps", "dof", "bodies", "frames", "fields"):
        if key not in header:
            raise MalformedFile(f"{path}: header missing key {key!r}")
    fps = float(header["fps"])
    if fps <= 0:
        raise BadRate(f"{path}: fps must be > 0, got {fps}")
    frames, dof, bodies = int(header["frames"]), int(header["dof"]), int(header["bodies"])

    arrays: dict[str, np.ndarray] = {}
    cursor = 8 + hlen
    names = [f["name"] for f in header["fields"]]
    if names != list(FIELD_ORDER):
        raise MalformedFile(f"{path}: unexpected field set {names}")
    for fdesc in header["fields"]:
        name = fdesc["name"]
        shape = tuple(int(s) for s in fdesc["shape"])
        if shape != _field_shape(name, frames, dof, bodies):
            raise MalformedFile(
                f"{path}: field {name} shape {shape} inconsistent with header counts"
            )
        nbytes = int(np.prod(shape)) * 4
        chunk = raw[cursor : cursor + nbytes]
        if len(chunk) != nbytes:
            raise MalformedFile(f"{path}: payload for {name} truncated")
        arrays[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        cursor += nbytes
    if cursor != len(raw):
        raise MalformedFile(f"{path}: {len(raw) - cursor} trailing bytes")

    clip = MotionClip(
        fps=fps,
        label=str(header.get("label", "")),
        source_id=str(header.get("source_id", "unknown")),
        **arrays,
    )
    return clip.validate()


@dataclass
class MotionBank:
    """All clips concatenated into contiguous per-field arrays."""

    fps: float
    dof: int
    bodies: int
    lengths: np.ndarray   # (M,) frames per motion
    offsets: np.ndarray   # (M,) cumulative start row per motion
    joint_pos: np.ndarray
    joint_vel: np.ndarray
    body_pos_w: np.ndarray
    body_quat_w: np.ndarray
    body_lin_vel_w: np.ndarray
    body_ang_vel_w: np.ndarray
    labels: list[str] = field(default_factory=list)
    source_ids: list[str] = field(default_factory=list)

    @property
    def motion_count(self) -> int:
        return len(self.lengths)

    @property
    def total_rows(self) -> int:
        return self.joint_pos.shape[0]


def build_bank(clips: list[MotionClip]) -> MotionBank:
    """Concatenate clips; offsets satisfy O_{m+1} = O_m + L_m."""
    if not clips:
        raise EmptyBank("need at least one clip")
    first = clips[0]
    for c in clips[1:]:
        if c.dof != first.dof or c.bodies != first.bodies or c.fps != first.fps:
            raise HeterogeneousSchema(
                f"clip schema (dof={c.dof}, bodies={c.bodies}, fps={c.fps}) "
                f"!= (dof={first.dof}, bodies={first.bodies}, fps={first.fps})"
            )
    lengths = np.array([c.length for c in clips], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
    cat = {name: np.concatenate([getattr(c, name) for c in clips], axis=0) for name in FIELD_ORDER}
    return MotionBank(
        fps=first.fps,
        dof=first.dof,
        bodies=first.bodies,
        lengths=lengths,
        offsets=offsets,
        labels=[c.label for c in clips],
        source_ids=[c.source_id for c in clips],
        **cat,
    )


def global_index(bank: MotionBank, m, t):
    """Map (motion, frame) to a global row: O_m + min(t, L_m - 1).

    Accepts scalars or equally-shaped integer arrays; frame indices clamp at
    the clip end so queries past the last frame hold it.
    """
    m_arr = np.asarray(m, dtype=np.int64)
    t_arr = np.asarray(t, dtype=np.int64)
    if np.any(m_arr < 0) or np.any(m_arr >= bank.motion_count):
        raise MotionOutOfRange(f"motion index out of [0, {bank.motion_count})")
    if np.any(t_arr < 0):
        raise MotionOutOfRange("frame index must be >= 0")
    rows = bank.offsets[m_arr] + np.minimum(t_arr, bank.lengths[m_arr] - 1)
    return rows if rows.ndim else int(rows)


@dataclass
class ReferenceWindow:
    """Flattened fixed-horizon reference windows, one row per environment."""

    data: np.ndarray      # (E, H*D) frame-major then feature
    horizon: int
    feature_width: int
    rows: np.ndarray      # (E, H) global row per frame, for consumers that re-gather


def gather_window(
    bank: MotionBank,
    assignments: np.ndarray,
    times: np.ndarray,
    horizon: int = 1,
    include_world: bool = False,
) -> ReferenceWindow:
    """Batched fixed-horizon window gather.

    Row k of env e is bank row global_index(m_e, t_e + k); the window is
    flattened frame-major then feature. Features default to joint position
    + joint velocity; `include_world` appends the flattened world-frame body
    fields (needed by reward evaluation, not by the policy input).
    """
    assignments = np.asarray(assignments, dtype=np.int64)
    times = np.asarray(times, dtype=np.int64)
    if assignments.shape != times.shape:
        raise MotionOutOfRange("assignments and times must have the same length")
    if horizon < 1:
        raise MotionOutOfRange(f"horizon must be >= 1, got {horizon}")
    E = assignments.shape[0]
    ks = np.arange(horizon, dtype=np.int64)
    rows = global_index(bank, assignments[:, None], times[:, None] + ks[None, :])  # (E, H)

    feats = [bank.joint_pos[rows], bank.joint_vel[rows]]
    if include_world:
        feats.extend(
            [
                bank.body_pos_w[rows].reshape(E, horizon, -1),
                bank.body_quat_w[rows].reshape(E, horizon, -1),
                bank.body_lin_vel_w[rows].reshape(E, horizon, -1),
                bank.body_ang_vel_w[rows].reshape(E, horizon, -1),
            ]
        )
    stacked = np.concatenate(feats, axis=-1)  # (E, H, D)
    width = stacked.shape[-1]
    return ReferenceWindow(
        data=stacked.reshape(E, horizon * width),
        horizon=horizon,
        feature_width=width,
        rows=rows,
    )


def shard_bank(paths: list[str], rank: int, world: int) -> list[str]:
    """Deterministic disjoint file subset per rank: round-robin by sorted name."""
    if world < 1 or not 0 <= rank < world:
        raise BadRank(f"rank {rank} outside [0, {world})")
    ordered = sorted(paths, key=lambda p: os.path.basename(str(p)))
    return ordered[rank::world]


def load_bank_dir(path: str | os.PathLike) -> tuple[MotionBank, list[str]]:
    """Ingest every ``.mbank`` file under `path` (sorted) into one bank."""
    files = sorted(
        os.path.join(path, f) for f in os.listdir(path) if f.endswith(".mbank")
    )
    if not files:
        raise EmptyBank(f"no .mbank files in {path}")
    return build_bank([ingest_clip(f) for f in files]), files
