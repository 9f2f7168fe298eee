"""Quaternion helpers.

Conventions
-----------
- Scalar-first [w, x, y, z] everywhere, matching the motion container header.
- All functions broadcast over leading axes; the quaternion axis is last.
- Angles in radians.

The planar environment embeds its rotations as quaternions about +y, so the
bank, rewards and metrics stay fully 3-D while the dynamics remain 2-D.
"""

from __future__ import annotations

import numpy as np

from .errors import NonUnitQuaternion

UNIT_TOL = 1e-6


def check_unit(q: np.ndarray, tol: float = UNIT_TOL) -> None:
    """Raise NonUnitQuaternion if any norm deviates from 1 by more than tol."""
    norms = np.linalg.norm(np.asarray(q, dtype=np.float64), axis=-1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise NonUnitQuaternion(f"quaternion norm off unit by {worst:.3e} (tol {tol:g})")


def quat_distance(q1: np.ndarray, q2: np.ndarray, validate: bool = True) -> np.ndarray:
    """Geodesic angle between unit quaternions: 2*arccos(|<q1,q2>|) in [0, pi].

    Double-cover safe (q and -q are the same rotation). Evaluated in the
    atan2 form, which is exact at zero distance and accurate where arccos is
    flat. Returns a scalar for single quaternions, an array for batches.
    """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    if validate:
        check_unit(q1)
        check_unit(q2)
    dot = np.sum(q1 * q2, axis=-1)
    q2s = np.where(dot[..., None] < 0, -q2, q2)
    near = np.linalg.norm(q1 - q2s, axis=-1)
    far = np.linalg.norm(q1 + q2s, axis=-1)
    ang = 4.0 * np.arctan2(near, far)
    return ang if ang.ndim else float(ang)


def quat_mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2, both [w, x, y, z]."""
    w1, x1, y1, z1 = (q1[..., i] for i in range(4))
    w2, x2, y2, z2 = (q2[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    """Conjugate (= inverse for unit quaternions)."""
    out = np.array(q, dtype=np.float64, copy=True)
    out[..., 1:] = -out[..., 1:]
    return out


def rotate_vec(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v [..., 3] by unit quaternions q [..., 4]."""
    w, x, y, z = (q[..., i] for i in range(4))
    vx, vy, vz = (v[..., i] for i in range(3))
    px = (1 - 2 * (y * y + z * z)) * vx + 2 * (x * y - w * z) * vy + 2 * (x * z + w * y) * vz
    py = 2 * (x * y + w * z) * vx + (1 - 2 * (x * x + z * z)) * vy + 2 * (y * z - w * x) * vz
    pz = 2 * (x * z - w * y) * vx + 2 * (y * z + w * x) * vy + (1 - 2 * (x * x + y * y)) * vz
    return np.stack([px, py, pz], axis=-1)


def quat_about_y(angle: np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation by `angle` about the +y axis."""
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    out = np.zeros(angle.shape + (4,))
    out[..., 0] = np.cos(half)
    out[..., 2] = np.sin(half)
    return out


def angle_about_y(q: np.ndarray) -> np.ndarray:
    """Recover the signed rotation angle about +y from a planar quaternion."""
    q = np.asarray(q, dtype=np.float64)
    return 2.0 * np.arctan2(q[..., 2], q[..., 0])


def random_unit(rng: np.random.Generator, shape: tuple[int, ...] = ()) -> np.ndarray:
    """Uniformly random unit quaternions (for tests and randomization)."""
    q = rng.normal(size=shape + (4,))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def wrap_angle(a: np.ndarray) -> np.ndarray:
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2.0 * np.pi)
