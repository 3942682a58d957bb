"""Array-level unit quaternion helpers.

Quaternions are stored scalar-first (w, x, y, z). Every function broadcasts
over leading dimensions, so a trajectory of N rotations is just an (N, 4)
array. Angles are radians unless a name says otherwise.
"""
from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    # bitwise idempotent: leave already-unit rows untouched so that
    # save/load round-trips reproduce files exactly
    return np.where(np.abs(norm - 1.0) <= 1e-12, q, q / norm)


def canonical(q: np.ndarray) -> np.ndarray:
    """Resolve the double cover: w >= 0, ties broken by the first non-zero
    imaginary component being positive."""
    q = np.asarray(q, dtype=float)
    w = q[..., 0]
    flip = w < 0.0
    # w == 0: look at x, then y, then z
    zero_w = w == 0.0
    if np.any(zero_w):
        x, y, z = q[..., 1], q[..., 2], q[..., 3]
        tie = np.where(x != 0.0, x, np.where(y != 0.0, y, z))
        flip = np.where(zero_w, tie < 0.0, flip)
    return np.where(flip[..., None], -q, q)


def mul(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
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


def conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v by quaternions q (R(q) @ v)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qv = q[..., 1:]
    w = q[..., 0:1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def from_rotvec(rv: np.ndarray) -> np.ndarray:
    """Quaternion of the rotation whose axis-angle vector is rv."""
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv, axis=-1)
    half = 0.5 * angle
    # sin(angle/2)/angle with a series fallback near zero
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    k = np.where(small, 0.5 - angle * angle / 48.0, np.sin(half) / safe)
    w = np.cos(half)
    return np.concatenate([w[..., None], k[..., None] * rv], axis=-1)


def to_rotvec(q: np.ndarray) -> np.ndarray:
    """Axis-angle vector of q, angle in [0, pi]."""
    q = canonical(np.asarray(q, dtype=float))
    w = q[..., 0]
    qv = q[..., 1:]
    nv = np.linalg.norm(qv, axis=-1)
    angle = 2.0 * np.arctan2(nv, w)
    small = nv < 1e-9
    safe = np.where(small, 1.0, nv)
    k = np.where(small, 2.0, angle / safe)
    return k[..., None] * qv


def angle_between(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Geodesic angle (radians) between two rotations, robust near 0 and pi."""
    rel = mul(conjugate(np.asarray(q1, dtype=float)), np.asarray(q2, dtype=float))
    nv = np.linalg.norm(rel[..., 1:], axis=-1)
    return 2.0 * np.arctan2(nv, np.abs(rel[..., 0]))


def rotation_angle(q: np.ndarray) -> np.ndarray:
    """Geodesic angle (radians) of a single rotation."""
    q = np.asarray(q, dtype=float)
    nv = np.linalg.norm(q[..., 1:], axis=-1)
    return 2.0 * np.arctan2(nv, np.abs(q[..., 0]))


def about_axis(axis: int, angle: np.ndarray) -> np.ndarray:
    """Quaternion rotating by `angle` about coordinate axis 0|1|2."""
    angle = np.asarray(angle, dtype=float)
    half = 0.5 * angle
    out = np.zeros(angle.shape + (4,))
    out[..., 0] = np.cos(half)
    out[..., 1 + axis] = np.sin(half)
    return out


def to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = (q[..., i] for i in range(4))
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def from_matrix(mat: np.ndarray) -> np.ndarray:
    """Quaternion from a rotation matrix (Shepperd's branch selection)."""
    m = np.asarray(mat, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("from_matrix expects a 3x3 matrix")
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return canonical(normalize(q))


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Shortest-arc spherical interpolation between two unit quaternions."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        return normalize(q0 + u * (q1 - q0))
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    return (np.sin((1.0 - u) * theta) / s) * q0 + (np.sin(u * theta) / s) * q1


def mean(qs: np.ndarray) -> np.ndarray:
    """Average rotation via the largest eigenvector of the outer-product
    accumulator (Markley et al. quaternion averaging). Sign-agnostic."""
    qs = np.asarray(qs, dtype=float)
    if qs.ndim != 2 or qs.shape[1] != 4 or qs.shape[0] == 0:
        raise ValueError("mean expects a non-empty (N, 4) array")
    acc = qs.T @ qs
    eigvals, eigvecs = np.linalg.eigh(acc)
    return canonical(normalize(eigvecs[:, -1]))
