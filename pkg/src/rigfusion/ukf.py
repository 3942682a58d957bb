"""15-state unscented Kalman filter fusing two camera-pose streams.

State vector layout: position (3), quaternion imaginary part (3),
velocity (3), angular velocity (3), linear acceleration (3). The quaternion
real part is reconstructed as w = sqrt(1 - |q_im|^2) with w >= 0, so the
filter operates on a plain 15-vector; the motion model is constant
acceleration for translation and constant angular velocity for rotation
(quaternion right-multiplied by the angular-rate increment).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat, se3
from .errors import NumericalError
from .se3 import Pose, Trajectory

N_STATES = 15
_P = slice(0, 3)
_QIM = slice(3, 6)
_V = slice(6, 9)
_AV = slice(9, 12)
_A = slice(12, 15)


@dataclass(frozen=True)
class UkfParams:
    """Sigma-point spread and process-noise spectral densities.

    The densities are deliberately loose tuning knobs: jerk_psd is the white
    translational jerk level ((m/s^3)^2/Hz) behind the constant-acceleration
    model, angular_accel_psd the white angular acceleration level
    ((rad/s^2)^2/Hz) behind the constant-angular-velocity model.
    """

    alpha: float = 0.3
    beta: float = 2.0
    kappa: float = 0.0
    jerk_psd: float = 1.0e6
    angular_accel_psd: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        lam = self.alpha**2 * (N_STATES + self.kappa) - N_STATES
        if lam <= -N_STATES:
            raise ValueError("kappa too small: sigma scaling lambda <= -n")
        if self.jerk_psd < 0.0 or self.angular_accel_psd < 0.0:
            raise ValueError("process noise densities must be >= 0")

    @property
    def lam(self) -> float:
        return self.alpha**2 * (N_STATES + self.kappa) - N_STATES

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        lam = self.lam
        n = N_STATES
        wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = lam / (n + lam) + (1.0 - self.alpha**2 + self.beta)
        return wm, wc


@dataclass
class UkfState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_im: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    av: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q_im, self.v, self.av, self.a])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "UkfState":
        x = np.asarray(x, dtype=float)
        if x.shape != (N_STATES,):
            raise ValueError(f"state vector must have length {N_STATES}")
        if not np.all(np.isfinite(x)):
            raise ValueError("state vector must be finite")
        return cls(
            p=x[_P].copy(), q_im=x[_QIM].copy(), v=x[_V].copy(), av=x[_AV].copy(), a=x[_A].copy()
        )

    def quaternion(self) -> np.ndarray:
        """Full unit quaternion with the real part reconstructed (w >= 0)."""
        norm_sq = float(self.q_im @ self.q_im)
        if norm_sq > 1.0:
            raise ValueError("|q_im| must be <= 1")
        return np.concatenate([[np.sqrt(1.0 - norm_sq)], self.q_im])

    def pose(self) -> Pose:
        return Pose(self.quaternion(), self.p)

    @classmethod
    def from_pose(cls, pose: Pose) -> "UkfState":
        q = quat.canonical(pose.q)
        return cls(p=pose.t.copy(), q_im=q[1:].copy())


@dataclass(frozen=True)
class PoseMeasurement:
    timestamp: float
    pose: Pose
    noise: np.ndarray  # 6x6 covariance over (position, q_im)
    source_id: int

    def __post_init__(self):
        noise = np.asarray(self.noise, dtype=float)
        if noise.shape != (6, 6):
            raise ValueError("measurement noise must be 6x6")
        if not np.allclose(noise, noise.T, atol=1e-12):
            raise ValueError("measurement noise must be symmetric")
        if np.any(np.linalg.eigvalsh(noise) <= 0.0):
            raise ValueError("measurement noise must be positive definite")
        object.__setattr__(self, "noise", noise)


# ---------------------------------------------------------------------------
# Covariance builders

def measurement_noise(
    sigma_translation: float,
    sigma_rotation_deg: float,
    lever_arm: np.ndarray | None = None,
    isotropic: bool = True,
) -> np.ndarray:
    """6x6 measurement covariance for a camera pose propagated from a tracked
    controller. Rotation noise on the controller displaces the camera through
    the lever arm r; by default that effect enters as an isotropic inflation
    sigma_r^2 * (2/3)|r|^2 per position axis (the filter is not told the
    orientation of the lever), with the full anisotropic form
    sigma_r^2 (|r|^2 I - r r^T) available via isotropic=False. Rotation enters
    the q_im block as (sigma_r / 2)^2 per axis; rotation/translation cross
    terms are dropped (treated as independent)."""
    sig_r = np.radians(sigma_rotation_deg)
    cov = np.zeros((6, 6))
    cov[:3, :3] = sigma_translation**2 * np.eye(3)
    if lever_arm is not None:
        r = np.asarray(lever_arm, dtype=float)
        if isotropic:
            cov[:3, :3] += sig_r**2 * (2.0 / 3.0) * float(r @ r) * np.eye(3)
        else:
            cov[:3, :3] += sig_r**2 * (float(r @ r) * np.eye(3) - np.outer(r, r))
    cov[3:, 3:] = (sig_r / 2.0) ** 2 * np.eye(3)
    return cov


def initial_covariance(
    meas_noise: np.ndarray,
    velocity_sigma: float = 0.5,
    angular_velocity_sigma: float = 1.0,
    accel_sigma: float = 2.0,
) -> np.ndarray:
    cov = np.zeros((N_STATES, N_STATES))
    cov[:6, :6] = meas_noise
    cov[_V, _V] = velocity_sigma**2 * np.eye(3)
    cov[_AV, _AV] = angular_velocity_sigma**2 * np.eye(3)
    cov[_A, _A] = accel_sigma**2 * np.eye(3)
    return cov


def _process_noise(dt: float, params: UkfParams) -> np.ndarray:
    """Discretized white-jerk / white-angular-acceleration process noise."""
    q = np.zeros((N_STATES, N_STATES))
    qj = params.jerk_psd
    qa = params.angular_accel_psd
    d2, d3, d4, d5 = dt * dt, dt**3, dt**4, dt**5
    for axis in range(3):
        ip, iv, ia = 0 + axis, 6 + axis, 12 + axis
        q[ip, ip] = qj * d5 / 20.0
        q[ip, iv] = q[iv, ip] = qj * d4 / 8.0
        q[ip, ia] = q[ia, ip] = qj * d3 / 6.0
        q[iv, iv] = qj * d3 / 3.0
        q[iv, ia] = q[ia, iv] = qj * d2 / 2.0
        q[ia, ia] = qj * dt
        iq, iw = 3 + axis, 9 + axis
        # q_im tracks half the rotation angle, hence the 1/2 factors
        q[iq, iq] = qa * d3 / 3.0 / 4.0
        q[iq, iw] = q[iw, iq] = qa * d2 / 2.0 / 2.0
        q[iw, iw] = qa * dt
    return q


# ---------------------------------------------------------------------------
# Sigma-point machinery on raw vectors

def _sigma_points(x: np.ndarray, cov: np.ndarray, params: UkfParams) -> np.ndarray:
    scale = N_STATES + params.lam
    sym = 0.5 * (cov + cov.T)
    try:
        root = np.linalg.cholesky(scale * sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance Cholesky factorization failed: {exc}") from exc
    pts = np.empty((2 * N_STATES + 1, N_STATES))
    pts[0] = x
    pts[1 : N_STATES + 1] = x + root.T
    pts[N_STATES + 1 :] = x - root.T
    return pts


def _full_quats(q_im: np.ndarray) -> np.ndarray:
    """Rebuild full quaternions from imaginary parts; rows pushed outside the
    unit ball by the sigma spread are rescaled onto it."""
    norm_sq = np.sum(q_im * q_im, axis=-1)
    over = norm_sq > 1.0
    if np.any(over):
        q_im = q_im.copy()
        q_im[over] /= np.sqrt(norm_sq[over])[:, None] * (1.0 + 1e-12)
        norm_sq = np.sum(q_im * q_im, axis=-1)
    w = np.sqrt(np.maximum(0.0, 1.0 - norm_sq))
    return np.concatenate([w[:, None], q_im], axis=-1)


def _propagate(pts: np.ndarray, dt: float) -> np.ndarray:
    out = pts.copy()
    out[:, _P] = pts[:, _P] + pts[:, _V] * dt + 0.5 * pts[:, _A] * dt * dt
    out[:, _V] = pts[:, _V] + pts[:, _A] * dt
    qs = _full_quats(pts[:, _QIM])
    dq = quat.from_rotvec(pts[:, _AV] * dt)
    q_new = quat.canonical(quat.mul(qs, dq))
    out[:, _QIM] = q_new[:, 1:]
    return out


def _clamp_qim(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x[_QIM])
    if norm > 1.0:
        x = x.copy()
        x[_QIM] /= norm * (1.0 + 1e-12)
    return x


def _predict_vec(
    x: np.ndarray,
    cov: np.ndarray,
    dt: float,
    params: UkfParams,
    wm,
    wc,
    q_cache: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    pts = _sigma_points(x, cov, params)
    pts = _propagate(pts, dt)
    mean = wm @ pts
    dev = pts - mean
    if q_cache is not None:
        q_proc = q_cache.get(dt)
        if q_proc is None:
            q_proc = _process_noise(dt, params)
            q_cache[dt] = q_proc
    else:
        q_proc = _process_noise(dt, params)
    new_cov = (dev * wc[:, None]).T @ dev + q_proc
    return _clamp_qim(mean), 0.5 * (new_cov + new_cov.T)


def _update_vec(
    x: np.ndarray, cov: np.ndarray, z: np.ndarray, r: np.ndarray, params: UkfParams, wm, wc
) -> tuple[np.ndarray, np.ndarray, float]:
    pts = _sigma_points(x, cov, params)
    zs = pts[:, :6]
    z_mean = wm @ zs
    dz = zs - z_mean
    s = (dz * wc[:, None]).T @ dz + r
    dx = pts - (wm @ pts)
    cross = (dx * wc[:, None]).T @ dz
    try:
        gain = np.linalg.solve(s, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"innovation covariance is singular: {exc}") from exc
    innovation = z - z_mean
    x_new = x + gain @ innovation
    cov_new = cov - gain @ s @ gain.T
    return _clamp_qim(x_new), 0.5 * (cov_new + cov_new.T), float(np.linalg.norm(innovation))


def _measurement_vector(pose: Pose, x_pred: np.ndarray) -> np.ndarray:
    """Pack a pose into (p, q_im), sign-aligning the quaternion with the
    predicted state so the innovation lives on one hemisphere."""
    q = quat.canonical(pose.q)
    q_im_pred = x_pred[_QIM]
    w_pred = np.sqrt(max(0.0, 1.0 - float(q_im_pred @ q_im_pred)))
    q_pred = np.concatenate([[w_pred], q_im_pred])
    if float(q @ q_pred) < 0.0:
        q = -q
    return np.concatenate([pose.t, q[1:]])


# ---------------------------------------------------------------------------
# Public operations

def predict(
    state: UkfState, cov: np.ndarray, dt: float, params: UkfParams
) -> tuple[UkfState, np.ndarray]:
    """Advance mean and covariance by dt through the motion model."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    wm, wc = params.weights()
    x, p = _predict_vec(state.as_vector(), np.asarray(cov, dtype=float), dt, params, wm, wc)
    return UkfState.from_vector(x), p


def update(
    state: UkfState, cov: np.ndarray, meas: PoseMeasurement, params: UkfParams
) -> tuple[UkfState, np.ndarray]:
    """Correct the state with one pose measurement."""
    wm, wc = params.weights()
    x = state.as_vector()
    z = _measurement_vector(meas.pose, x)
    x_new, p_new, _ = _update_vec(x, np.asarray(cov, dtype=float), z, meas.noise, params, wm, wc)
    return UkfState.from_vector(x_new), p_new


def run(
    stream1: list[PoseMeasurement],
    stream2: list[PoseMeasurement],
    params: UkfParams,
    init_cov: np.ndarray | None = None,
    body_id: str = "camera_fused",
    diagnostics: list | None = None,
) -> Trajectory:
    """Fuse two time-sorted measurement streams in global timestamp order.

    The filter initializes from the earliest measurement; at every
    measurement it predicts forward (skipped for zero gaps) and updates. The
    output holds the posterior pose at each distinct processed timestamp.
    """
    if not stream1 or not stream2:
        raise ValueError("both measurement streams must be non-empty")
    merged = sorted(stream1 + stream2, key=lambda m: m.timestamp)
    wm, wc = params.weights()

    first = merged[0]
    x = UkfState.from_pose(first.pose).as_vector()
    cov = np.asarray(init_cov, dtype=float) if init_cov is not None else initial_covariance(first.noise)
    t_cur = first.timestamp
    if diagnostics is not None:
        diagnostics.append((t_cur, 0.0, float(np.trace(cov))))

    out_times = [t_cur]
    out_x = [x]
    q_cache: dict = {}
    for meas in merged[1:]:
        dt = meas.timestamp - t_cur
        if dt > 0.0:
            x, cov = _predict_vec(x, cov, dt, params, wm, wc, q_cache)
            t_cur = meas.timestamp
        z = _measurement_vector(meas.pose, x)
        x, cov, innov = _update_vec(x, cov, z, meas.noise, params, wm, wc)
        if diagnostics is not None:
            diagnostics.append((meas.timestamp, innov, float(np.trace(cov))))
        if out_times[-1] == t_cur:
            out_x[-1] = x
        else:
            out_times.append(t_cur)
            out_x.append(x)

    qs = _full_quats(np.array([xv[_QIM] for xv in out_x]))
    ts = np.array([xv[_P] for xv in out_x])
    return Trajectory(body_id, np.array(out_times), qs, ts)


def pose_at(fused: Trajectory, image_timestamp: float) -> Pose:
    """Fused pose interpolated at an image timestamp."""
    return se3.interpolate(fused, image_timestamp)
