"""Sweep-bearing measurement model of outside-in base-station tracking.

A base station flashes, then sweeps a horizontal and a vertical light plane
across the volume with a rotor of known rate; the flash-to-sweep delay at a
photodiode encodes one bearing angle. Treating the station as an ideal
angular camera, a rigid body with >= 3 known sensor points is recovered from
its bearing pairs by damped Gauss-Newton over SE(3).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat, se3
from .errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    NonConvergenceError,
    NumericalError,
    TimeRangeError,
)
from .se3 import Pose, Trajectory


@dataclass(frozen=True)
class LighthouseConfig:
    pose: Pose  # station in world frame; +z is the boresight
    rotor_rate: float = 52.0  # rotations per second
    fov_horizontal: float = 150.0  # degrees, full opening angle
    fov_vertical: float = 110.0

    def __post_init__(self):
        if not 50.0 <= self.rotor_rate <= 55.0:
            raise ValueError("rotor_rate must lie in [50, 55] rotations/s")
        if not (0.0 < self.fov_horizontal <= 180.0 and 0.0 < self.fov_vertical <= 180.0):
            raise ValueError("field of view angles must lie in (0, 180] degrees")


@dataclass(frozen=True)
class SensorLayout:
    """Known sensor positions (meters) in the tracked body frame."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise ValueError("points must be a non-empty (N, 3) array")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def is_coplanar(self, tol: float = 1e-9) -> bool:
        if len(self) < 4:
            return True
        centered = self.points - self.points.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)
        return bool(svals[-1] <= tol * max(svals[0], 1.0))


@dataclass(frozen=True)
class SweepMeasurement:
    sensor_index: int
    horizontal_angle: float  # radians
    vertical_angle: float  # radians


def default_sensor_layout() -> SensorLayout:
    """24 sensors on a controller-like cap: two rings plus an offset crown."""
    pts = []
    for radius, height, count, phase in ((0.045, -0.02, 12, 0.0), (0.035, 0.025, 8, 0.2)):
        ang = 2.0 * np.pi * np.arange(count) / count + phase
        pts.append(
            np.stack([radius * np.cos(ang), radius * np.sin(ang), np.full(count, height)], axis=-1)
        )
    crown = 2.0 * np.pi * np.arange(4) / 4 + 0.5
    pts.append(
        np.stack([0.015 * np.cos(crown), 0.015 * np.sin(crown), np.full(4, 0.045)], axis=-1)
    )
    return SensorLayout(np.concatenate(pts, axis=0))


def timing_to_angle(dt: float, rotor_rate: float) -> float:
    """Bearing angle from the flash-to-sweep delay; the sweep center (half a
    rotor turn after the flash) maps to 0."""
    period = 1.0 / rotor_rate
    if dt < 0.0 or dt >= period:
        raise TimeRangeError(dt, 0.0, period, what="sweep delay")
    return 2.0 * np.pi * rotor_rate * dt - np.pi


def angle_to_timing(angle: float, rotor_rate: float) -> float:
    """Inverse of timing_to_angle."""
    if not -np.pi <= angle < np.pi:
        raise TimeRangeError(angle, -np.pi, np.pi, what="sweep angle")
    return (angle + np.pi) / (2.0 * np.pi * rotor_rate)


def project_sensors(
    body: Pose, layout: SensorLayout, lh: LighthouseConfig
) -> list[SweepMeasurement]:
    """Bearing pair of every sensor visible inside the station's field of
    view; sensors behind the station or outside the FOV are omitted."""
    world_pts = body.apply(layout.points)
    inv = se3.inverse(lh.pose)
    local = inv.apply(world_pts)
    dists = np.linalg.norm(local, axis=-1)
    if np.any(dists < 1e-9):
        raise DegenerateGeometryError("sensor coincides with the station origin")
    h = np.arctan2(local[:, 0], local[:, 2])
    v = np.arctan2(local[:, 1], local[:, 2])
    half_h = 0.5 * np.radians(lh.fov_horizontal)
    half_v = 0.5 * np.radians(lh.fov_vertical)
    visible = (local[:, 2] > 0.0) & (np.abs(h) <= half_h) & (np.abs(v) <= half_v)
    return [
        SweepMeasurement(int(i), float(h[i]), float(v[i]))
        for i in np.flatnonzero(visible)
    ]


def _residuals_jacobian(
    body_q: np.ndarray,
    body_t: np.ndarray,
    measurements: list[list[SweepMeasurement]],
    layout: SensorLayout,
    lighthouses: list[LighthouseConfig],
) -> tuple[np.ndarray, np.ndarray]:
    res_rows = []
    jac_rows = []
    r_body = quat.to_matrix(body_q)
    for lh, meas in zip(lighthouses, measurements):
        if not meas:
            continue
        idx = np.array([m.sensor_index for m in meas])
        sensors = layout.points[idx]
        r_lh = quat.to_matrix(lh.pose.q).T
        local = (r_lh @ (r_body @ sensors.T + body_t[:, None] - lh.pose.t[:, None])).T
        x, y, z = local[:, 0], local[:, 1], local[:, 2]
        h_pred = np.arctan2(x, z)
        v_pred = np.arctan2(y, z)
        res_rows.append(np.array([m.horizontal_angle for m in meas]) - h_pred)
        res_rows.append(np.array([m.vertical_angle for m in meas]) - v_pred)

        # dp/dt = R_lh^T ; dp/dtheta = -R_lh^T R_body [s]x (right perturbation)
        n = len(meas)
        dp_dtheta = np.empty((n, 3, 3))
        rb = r_lh @ r_body
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            dp_dtheta[:, :, k] = (rb @ np.cross(np.broadcast_to(e, sensors.shape), sensors).T).T
        dp = np.concatenate([np.broadcast_to(r_lh, (n, 3, 3)), dp_dtheta], axis=2)  # (n,3,6)

        inv_h = 1.0 / (x * x + z * z)
        inv_v = 1.0 / (y * y + z * z)
        dh_dp = np.stack([z * inv_h, np.zeros(n), -x * inv_h], axis=-1)
        dv_dp = np.stack([np.zeros(n), z * inv_v, -y * inv_v], axis=-1)
        jac_rows.append(-np.einsum("ni,nij->nj", dh_dp, dp))
        jac_rows.append(-np.einsum("ni,nij->nj", dv_dp, dp))
    if not res_rows:
        return np.empty(0), np.empty((0, 6))
    return np.concatenate(res_rows), np.concatenate(jac_rows, axis=0)


def solve_pose(
    measurements: list[list[SweepMeasurement]],
    layout: SensorLayout,
    lighthouses: list[LighthouseConfig],
    initial: Pose,
    max_iterations: int = 50,
    step_tol: float = 1e-10,
) -> Pose:
    """Rigid-body pose minimizing the squared bearing residuals, starting
    from `initial` (typically the previous frame's estimate)."""
    if len(measurements) != len(lighthouses):
        raise ValueError("one measurement list per lighthouse required")
    n_angles = 2 * sum(len(m) for m in measurements)
    if n_angles < 6:
        raise InsufficientDataError(
            f"pose is underdetermined: {n_angles} angle measurements, need >= 6"
        )
    active = [i for i, m in enumerate(measurements) if m]
    if len(active) == 1 and layout.is_coplanar():
        raise DegenerateGeometryError(
            "coplanar sensor layout seen by a single station is ill-conditioned"
        )

    q = quat.canonical(initial.q.copy())
    t = initial.t.copy()
    lam = 1e-6
    res, jac = _residuals_jacobian(q, t, measurements, layout, lighthouses)
    cost = float(res @ res)
    for _ in range(max_iterations):
        jtj = jac.T @ jac
        jtr = jac.T @ res
        improved = False
        for _ in range(12):
            try:
                step = np.linalg.solve(jtj + lam * np.eye(6), -jtr)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"normal equations singular: {exc}") from exc
            if float(np.linalg.norm(step)) < step_tol:
                return Pose(q, t)  # stalled at a (local) optimum
            new_q = quat.canonical(quat.mul(q, quat.from_rotvec(step[3:])))
            new_t = t + step[:3]
            new_res, new_jac = _residuals_jacobian(new_q, new_t, measurements, layout, lighthouses)
            new_cost = float(new_res @ new_res)
            if new_cost <= cost:
                q, t, res, jac, cost = new_q, new_t, new_res, new_jac, new_cost
                lam = max(lam / 3.0, 1e-12)
                improved = True
                break
            lam *= 10.0
        if not improved:
            raise NonConvergenceError("damping failed to reduce the bearing cost", cost)
        if float(np.linalg.norm(step)) < step_tol:
            return Pose(q, t)
    raise NonConvergenceError(f"no convergence in {max_iterations} iterations", cost)


def simulate_sweeps(
    traj: Trajectory,
    layout: SensorLayout,
    lighthouses: list[LighthouseConfig],
    angle_noise: float = 0.0,
    seed: int = 0,
) -> list[list[list[SweepMeasurement]]]:
    """Per-frame, per-lighthouse bearing measurements with optional Gaussian
    angle noise (radians)."""
    rng = np.random.default_rng(seed)
    frames = []
    for i in range(len(traj)):
        body = traj.pose(i)
        per_lh = []
        for lh in lighthouses:
            meas = project_sensors(body, layout, lh)
            if angle_noise > 0.0:
                meas = [
                    SweepMeasurement(
                        m.sensor_index,
                        m.horizontal_angle + rng.normal(0.0, angle_noise),
                        m.vertical_angle + rng.normal(0.0, angle_noise),
                    )
                    for m in meas
                ]
            per_lh.append(meas)
        frames.append(per_lh)
    return frames


def track_trajectory(
    frames: list[list[list[SweepMeasurement]]],
    times: np.ndarray,
    layout: SensorLayout,
    lighthouses: list[LighthouseConfig],
    initial: Pose,
    body_id: str = "tracked",
) -> Trajectory:
    """Solve every frame sequentially, seeding each solve with the previous
    frame's pose."""
    guess = initial
    qs, ts = [], []
    for per_lh in frames:
        guess = solve_pose(per_lh, layout, lighthouses, guess)
        qs.append(guess.q)
        ts.append(guess.t)
    return Trajectory(body_id, np.asarray(times, dtype=float), np.array(qs), np.array(ts))


# ---------------------------------------------------------------------------
# Sweep measurement file: `timestamp lighthouse_id sensor_index h_angle v_angle`

def save_sweeps(frames, times, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# timestamp lighthouse_id sensor_index h_angle v_angle\n")
        for t, per_lh in zip(times, frames):
            for lh_id, meas in enumerate(per_lh):
                for m in meas:
                    fh.write(
                        f"{float(t)!r} {lh_id} {m.sensor_index} "
                        f"{m.horizontal_angle!r} {m.vertical_angle!r}\n"
                    )


def load_sweeps(path) -> tuple[list[list[list[SweepMeasurement]]], np.ndarray]:
    by_time: dict[float, dict[int, list[SweepMeasurement]]] = {}
    n_lh = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 5:
                raise ValueError(f"expected 5 fields per sweep line, got {len(fields)}")
            t, lh_id, sensor = float(fields[0]), int(fields[1]), int(fields[2])
            n_lh = max(n_lh, lh_id + 1)
            by_time.setdefault(t, {}).setdefault(lh_id, []).append(
                SweepMeasurement(sensor, float(fields[3]), float(fields[4]))
            )
    times = np.array(sorted(by_time))
    frames = [
        [by_time[t].get(lh_id, []) for lh_id in range(n_lh)] for t in times
    ]
    return frames, times
