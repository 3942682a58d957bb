"""Rigid-body poses, stamped trajectories, and the core SE(3) operations.

A Pose is a unit quaternion (w, x, y, z) plus a translation in meters. The
quaternion is normalized and sign-canonicalized (w >= 0) by construction, so
value comparisons are deterministic. Composition follows p_a = T_ab * p_b
semantics: ``compose(a, b)`` applies b first, then a.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import quat
from .errors import TimeRangeError

_QUAT_TOL = 1e-9


class Pose:
    """Rigid transform: rotation quaternion (w, x, y, z) + translation (m)."""

    __slots__ = ("q", "t")

    def __init__(self, rotation: Sequence[float], translation: Sequence[float]):
        q = np.asarray(rotation, dtype=float)
        t = np.asarray(translation, dtype=float)
        if q.shape != (4,):
            raise ValueError(f"rotation must be a length-4 quaternion, got shape {q.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be a length-3 vector, got shape {t.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("pose components must be finite")
        self.q = quat.canonical(quat.normalize(q))
        self.t = t.copy()

    @classmethod
    def identity(cls) -> "Pose":
        return cls(quat.IDENTITY, np.zeros(3))

    @classmethod
    def from_rotvec(cls, rotvec: Sequence[float], translation: Sequence[float]) -> "Pose":
        return cls(quat.from_rotvec(np.asarray(rotvec, dtype=float)), translation)

    def rotation_matrix(self) -> np.ndarray:
        return quat.to_matrix(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (..., 3) from this pose's frame into the parent frame."""
        return quat.rotate(self.q, np.asarray(points, dtype=float)) + self.t

    def __repr__(self) -> str:
        q = ", ".join(f"{v:.6g}" for v in self.q)
        t = ", ".join(f"{v:.6g}" for v in self.t)
        return f"Pose(q=[{q}], t=[{t}])"


@dataclass(frozen=True)
class PoseDelta:
    """Magnitudes separating two poses: meters and degrees, both >= 0."""

    translation_error: float
    rotation_error: float

    def __post_init__(self):
        if self.translation_error < 0.0 or not 0.0 <= self.rotation_error <= 180.0 + 1e-9:
            raise ValueError("PoseDelta components out of range")


@dataclass(frozen=True)
class StampedPose:
    timestamp: float
    pose: Pose

    def __post_init__(self):
        if not np.isfinite(self.timestamp) or self.timestamp < 0.0:
            raise ValueError(f"timestamp must be finite and non-negative, got {self.timestamp}")


class Trajectory:
    """Time-ordered pose samples for one body, stored as packed arrays."""

    __slots__ = ("body_id", "_times", "_quats", "_trans")

    def __init__(
        self,
        body_id: str,
        times: np.ndarray,
        quaternions: np.ndarray,
        translations: np.ndarray,
    ):
        times = np.asarray(times, dtype=float)
        quats = np.asarray(quaternions, dtype=float)
        trans = np.asarray(translations, dtype=float)
        n = times.shape[0]
        if times.ndim != 1 or quats.shape != (n, 4) or trans.shape != (n, 3):
            raise ValueError("inconsistent trajectory array shapes")
        if n == 0:
            raise ValueError("trajectory must contain at least one sample")
        if not np.all(np.isfinite(times)) or np.any(times < 0.0):
            raise ValueError("timestamps must be finite and non-negative")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        self.body_id = body_id
        self._times = times.copy()
        self._quats = quat.canonical(quat.normalize(quats))
        self._trans = trans.copy()

    @classmethod
    def from_poses(cls, body_id: str, samples: Iterable[StampedPose]) -> "Trajectory":
        samples = list(samples)
        times = np.array([s.timestamp for s in samples])
        quats = np.array([s.pose.q for s in samples]).reshape(len(samples), 4)
        trans = np.array([s.pose.t for s in samples]).reshape(len(samples), 3)
        return cls(body_id, times, quats, trans)

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def quaternions(self) -> np.ndarray:
        return self._quats

    @property
    def translations(self) -> np.ndarray:
        return self._trans

    def __len__(self) -> int:
        return self._times.shape[0]

    def pose(self, index: int) -> Pose:
        return Pose(self._quats[index], self._trans[index])

    def __getitem__(self, index: int) -> StampedPose:
        return StampedPose(float(self._times[index]), self.pose(index))

    def span(self) -> tuple[float, float]:
        return float(self._times[0]), float(self._times[-1])

    def __repr__(self) -> str:
        t0, t1 = self.span()
        return f"Trajectory({self.body_id!r}, {len(self)} samples, [{t0:.3f}, {t1:.3f}] s)"


# ---------------------------------------------------------------------------
# Core operations

def compose(a: Pose, b: Pose) -> Pose:
    """Transform equivalent to applying b, then a."""
    return Pose(quat.mul(a.q, b.q), a.t + quat.rotate(a.q, b.t))


def inverse(p: Pose) -> Pose:
    qc = quat.conjugate(p.q)
    return Pose(qc, -quat.rotate(qc, p.t))


def delta(a: Pose, b: Pose) -> PoseDelta:
    """Translation distance (m) and geodesic rotation angle (deg) between poses."""
    dist = float(np.linalg.norm(a.t - b.t))
    ang = float(np.degrees(quat.angle_between(a.q, b.q)))
    return PoseDelta(dist, min(ang, 180.0))


def interpolate(traj: Trajectory, t: float) -> Pose:
    """Pose at time t: linear in translation, spherical (shortest arc) in rotation."""
    times = traj.times
    if not times[0] <= t <= times[-1]:
        raise TimeRangeError(t, float(times[0]), float(times[-1]))
    idx = int(np.searchsorted(times, t))
    if idx < len(times) and times[idx] == t:
        return traj.pose(idx)
    lo, hi = idx - 1, idx
    u = (t - times[lo]) / (times[hi] - times[lo])
    q = quat.slerp(traj.quaternions[lo], traj.quaternions[hi], float(u))
    tr = (1.0 - u) * traj.translations[lo] + u * traj.translations[hi]
    return Pose(q, tr)


def mean_pose(poses: Sequence[Pose]) -> Pose:
    """Average pose: arithmetic mean translation, eigenvector quaternion mean."""
    if len(poses) == 0:
        raise ValueError("mean_pose requires at least one pose")
    qs = np.array([p.q for p in poses])
    ts = np.array([p.t for p in poses])
    return Pose(quat.mean(qs), ts.mean(axis=0))


# ---------------------------------------------------------------------------
# Batched helpers shared by the simulation, calibration, and metrics layers.

def compose_qt(
    qa: np.ndarray, ta: np.ndarray, qb: np.ndarray, tb: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Batched compose on raw (q, t) arrays; quaternions are canonicalized."""
    q = quat.canonical(quat.mul(qa, qb))
    t = ta + quat.rotate(qa, tb)
    return q, t


def inverse_qt(q: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    qc = quat.conjugate(q)
    return quat.canonical(qc), -quat.rotate(qc, t)


def transform_trajectory(traj: Trajectory, x: Pose, body_id: str | None = None) -> Trajectory:
    """Compose every sample with a constant right-hand transform (sample o x)."""
    q, t = compose_qt(traj.quaternions, traj.translations, x.q, x.t)
    return Trajectory(body_id or traj.body_id, traj.times, q, t)


def resample(traj: Trajectory, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized interpolation of a trajectory at many timestamps.

    Returns (quaternions, translations); all query times must lie inside the
    trajectory span. Exact sample hits reproduce the stored values.
    """
    times = np.asarray(times, dtype=float)
    src_t = traj.times
    if np.any(times < src_t[0]) or np.any(times > src_t[-1]):
        bad = times[(times < src_t[0]) | (times > src_t[-1])][0]
        raise TimeRangeError(float(bad), float(src_t[0]), float(src_t[-1]))
    hi = np.clip(np.searchsorted(src_t, times, side="left"), 1, len(src_t) - 1)
    lo = hi - 1
    u = (times - src_t[lo]) / (src_t[hi] - src_t[lo])

    q0 = traj.quaternions[lo]
    q1 = traj.quaternions[hi]
    dot = np.sum(q0 * q1, axis=-1)
    q1 = np.where(dot[:, None] < 0.0, -q1, q1)
    dot = np.abs(dot)
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    near = sin_theta < 1e-9
    safe_sin = np.where(near, 1.0, sin_theta)
    w0 = np.where(near, 1.0 - u, np.sin((1.0 - u) * theta) / safe_sin)
    w1 = np.where(near, u, np.sin(u * theta) / safe_sin)
    q = quat.canonical(quat.normalize(w0[:, None] * q0 + w1[:, None] * q1))
    t = (1.0 - u[:, None]) * traj.translations[lo] + u[:, None] * traj.translations[hi]

    # reproduce stored samples exactly where the query hits a grid point
    exact_idx = np.searchsorted(src_t, times)
    exact_idx = np.minimum(exact_idx, len(src_t) - 1)
    hit = src_t[exact_idx] == times
    if np.any(hit):
        q[hit] = traj.quaternions[exact_idx[hit]]
        t[hit] = traj.translations[exact_idx[hit]]
    return q, t


# ---------------------------------------------------------------------------
# Trajectory text format: `timestamp tx ty tz qx qy qz qw`, '#' comments.

def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# body: {traj.body_id}\n")
        fh.write("# timestamp tx ty tz qx qy qz qw\n")
        for i in range(len(traj)):
            t = float(traj.times[i])
            tx, ty, tz = (float(v) for v in traj.translations[i])
            w, x, y, z = (float(v) for v in traj.quaternions[i])
            fh.write(
                f"{t!r} {tx!r} {ty!r} {tz!r} {x!r} {y!r} {z!r} {w!r}\n"
            )


def load_trajectory(path, body_id: str | None = None) -> Trajectory:
    times, quats, trans = [], [], []
    parsed_body = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("# body:"):
                    parsed_body = line.split(":", 1)[1].strip()
                continue
            fields = line.split()
            if len(fields) != 8:
                raise ValueError(f"expected 8 fields per line, got {len(fields)}: {line!r}")
            vals = [float(v) for v in fields]
            times.append(vals[0])
            trans.append(vals[1:4])
            x, y, z, w = vals[4:8]
            quats.append([w, x, y, z])
    name = body_id or parsed_body or "body"
    return Trajectory(name, np.array(times), np.array(quats), np.array(trans))
