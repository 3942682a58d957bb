"""Hand-eye calibration for the camera stick.

Estimates the fixed controller -> camera transform X from paired controller
poses (hand) and camera -> target observations (eye). Consecutive pose pairs
give motions A (hand) and B (eye) satisfying A X = X B; the rotation is
solved with the Tsai-Lenz linear formulation, the translation by least
squares. Block-repeated solutions are then fused by a damped Gauss-Newton
pose average.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import quat, se3
from .errors import (
    DegenerateMotionError,
    InsufficientDataError,
    InsufficientMotionError,
    NonConvergenceError,
)
from .se3 import Pose, Trajectory
from .simulate import TargetObservation


@dataclass(frozen=True)
class HandEyeSample:
    """One synchronized snapshot: both controller poses plus the camera's
    view of the calibration target."""

    tf_world_wm1: Pose
    tf_world_wm2: Pose
    tf_cam_target: Pose
    timestamp: float


@dataclass(frozen=True)
class MotionPair:
    hand_motion: Pose  # A: controller frame i -> i+1
    eye_motion: Pose  # B: camera frame i -> i+1
    rotation_angle: float  # degrees, of the hand motion


@dataclass(frozen=True)
class HandEyeSolution:
    tf_wm_cam: Pose
    residual_rotation: float  # degrees RMS over motion pairs
    residual_translation: float  # meters RMS over motion pairs
    sample_count: int


@dataclass(frozen=True)
class RefinedHandEye:
    tf_wm1_cam: Pose
    tf_wm2_cam: Pose
    solutions_wm1: list[HandEyeSolution]
    solutions_wm2: list[HandEyeSolution]


def collect_samples(
    controller1: Trajectory,
    controller2: Trajectory,
    observations: list[TargetObservation],
    interval: float,
) -> list[HandEyeSample]:
    """Subsample the streams at roughly `interval` seconds so consecutive
    samples carry enough rotation for the motion pairs."""
    if interval <= 0.0:
        raise ValueError("interval must be positive")
    obs_times = np.array([o.timestamp for o in observations])
    t0, t1 = controller1.span()
    picked: list[int] = []
    next_t = -np.inf
    for i, t in enumerate(obs_times):
        if t < next_t or t < t0 or t > t1:
            continue
        picked.append(i)
        next_t = t + interval - 1e-9  # absorb timestamp grid round-off
    times = obs_times[picked]
    q1, p1 = se3.resample(controller1, times)
    q2, p2 = se3.resample(controller2, times)
    return [
        HandEyeSample(
            tf_world_wm1=Pose(q1[k], p1[k]),
            tf_world_wm2=Pose(q2[k], p2[k]),
            tf_cam_target=observations[i].tf_cam_target,
            timestamp=float(times[k]),
        )
        for k, i in enumerate(picked)
    ]


def build_motion_pairs(
    samples: list[HandEyeSample], controller: int, min_rotation: float = 5.0
) -> list[MotionPair]:
    """Consecutive-sample motions A_i = H_i^-1 H_{i+1}, B_i = C_i C_{i+1}^-1;
    pairs rotating less than `min_rotation` degrees are discarded."""
    if controller not in (1, 2):
        raise ValueError("controller must be 1 or 2")
    if len(samples) < 2:
        raise InsufficientMotionError("need at least two samples to form a motion pair")
    pairs = []
    for a, b in zip(samples[:-1], samples[1:]):
        hand_a = a.tf_world_wm1 if controller == 1 else a.tf_world_wm2
        hand_b = b.tf_world_wm1 if controller == 1 else b.tf_world_wm2
        hand = se3.compose(se3.inverse(hand_a), hand_b)
        eye = se3.compose(a.tf_cam_target, se3.inverse(b.tf_cam_target))
        angle = float(np.degrees(quat.rotation_angle(hand.q)))
        if angle < min_rotation:
            continue
        pairs.append(MotionPair(hand_motion=hand, eye_motion=eye, rotation_angle=angle))
    if len(pairs) < 3:
        raise InsufficientMotionError(
            f"only {len(pairs)} motion pairs exceed {min_rotation} deg rotation; need >= 3"
        )
    return pairs


def _tsai_vector(q: np.ndarray) -> np.ndarray:
    # 2 sin(theta/2) * axis, the rotation vector of the Tsai-Lenz linear system
    return 2.0 * q[1:]


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def solve_tsai(pairs: list[MotionPair]) -> HandEyeSolution:
    """Tsai-Lenz closed-form estimate of X from motion pairs.

    Rotation: solve skew(Pa + Pb) u = Pb - Pa for the Gibbs vector u of X.
    Translation: least squares on (R_A - I) t = R_X t_B - t_A.
    """
    if len(pairs) < 3:
        raise InsufficientMotionError(f"need >= 3 motion pairs, got {len(pairs)}")

    axes = []
    rows = []
    rhs = []
    for pair in pairs:
        pa = _tsai_vector(quat.canonical(pair.hand_motion.q))
        pb = _tsai_vector(quat.canonical(pair.eye_motion.q))
        rows.append(_skew(pa + pb))
        rhs.append(pb - pa)
        na = np.linalg.norm(pa)
        if na > 0.0:
            axes.append(pa / na)

    axis_mat = np.array(axes)
    scatter = axis_mat.T @ axis_mat
    eigvals = np.linalg.eigvalsh(scatter)
    if eigvals[-1] <= 0.0 or eigvals[-2] / eigvals[-1] < 1e-10:
        raise DegenerateMotionError(
            "rotation axes are (nearly) collinear: a second independent "
            "rotation axis is required to determine the calibration"
        )

    m = np.concatenate(rows, axis=0)
    b = np.concatenate(rhs, axis=0)
    u, *_ = np.linalg.lstsq(m, b, rcond=None)
    # Gibbs vector -> unit quaternion
    qx = quat.canonical(
        np.concatenate([[1.0], u]) / np.sqrt(1.0 + float(u @ u))
    )
    rx = quat.to_matrix(qx)

    c_rows = []
    d_rows = []
    for pair in pairs:
        ra = quat.to_matrix(pair.hand_motion.q)
        c_rows.append(ra - np.eye(3))
        d_rows.append(rx @ pair.eye_motion.t - pair.hand_motion.t)
    c = np.concatenate(c_rows, axis=0)
    d = np.concatenate(d_rows, axis=0)
    tx, *_ = np.linalg.lstsq(c, d, rcond=None)

    x = Pose(qx, tx)
    rot_res = []
    trans_res = []
    for pair in pairs:
        lhs = se3.compose(pair.hand_motion, x)
        rhs_pose = se3.compose(x, pair.eye_motion)
        d_pose = se3.delta(lhs, rhs_pose)
        rot_res.append(d_pose.rotation_error)
        trans_res.append(d_pose.translation_error)
    return HandEyeSolution(
        tf_wm_cam=x,
        residual_rotation=float(np.sqrt(np.mean(np.square(rot_res)))),
        residual_translation=float(np.sqrt(np.mean(np.square(trans_res)))),
        sample_count=len(pairs) + 1,
    )


def calibrate_repeated(
    samples: list[HandEyeSample],
    set_size: int = 50,
    repetitions: int = 20,
    min_rotation: float = 5.0,
) -> tuple[list[HandEyeSolution], list[HandEyeSolution]]:
    """Run the calibration on `repetitions` disjoint consecutive blocks of
    `set_size` samples; returns the solution list for each controller."""
    needed = set_size * repetitions
    if len(samples) < needed:
        raise InsufficientDataError(
            f"need {needed} samples ({repetitions} blocks of {set_size}), got {len(samples)}"
        )
    out1, out2 = [], []
    for k in range(repetitions):
        block = samples[k * set_size : (k + 1) * set_size]
        for controller, out in ((1, out1), (2, out2)):
            pairs = build_motion_pairs(block, controller, min_rotation)
            sol = solve_tsai(pairs)
            out.append(
                HandEyeSolution(
                    tf_wm_cam=sol.tf_wm_cam,
                    residual_rotation=sol.residual_rotation,
                    residual_translation=sol.residual_translation,
                    sample_count=set_size,
                )
            )
    return out1, out2


# ---------------------------------------------------------------------------
# Nonlinear refinement: equal-weight pose averaging by damped Gauss-Newton.

def _fit_mean_pose(
    qs: np.ndarray,
    ts: np.ndarray,
    rotation_weight: float = 1.0,
    max_iterations: int = 100,
    tol: float = 1e-14,
) -> tuple[Pose, float]:
    """Minimize sum of w_r^2*angle(R, R_i)^2 + |t - t_i|^2 with a damped
    Gauss-Newton iteration started from the closed-form pose mean."""

    def cost(q, t):
        ang = quat.angle_between(np.broadcast_to(q, qs.shape), qs)
        return float(np.sum((rotation_weight * ang) ** 2) + np.sum((t - ts) ** 2))

    q = quat.mean(qs)
    t = ts.mean(axis=0)
    current = cost(q, t)
    lam = 1e-12
    n = qs.shape[0]
    for _ in range(max_iterations):
        # residual rotation vectors of q relative to each input
        rel = quat.mul(quat.conjugate(qs), np.broadcast_to(q, qs.shape))
        r_rot = quat.to_rotvec(rel)
        step_rot = -np.sum(r_rot, axis=0) / (n + lam)
        step_t = -np.sum(t - ts, axis=0) / (n + lam)
        new_q = quat.canonical(quat.mul(q, quat.from_rotvec(step_rot)))
        new_t = t + step_t
        new_cost = cost(new_q, new_t)
        if new_cost <= current:
            q, t, current = new_q, new_t, new_cost
            lam = max(lam / 4.0, 1e-12)
        else:
            lam = max(lam * 10.0, 1.0)
        if np.linalg.norm(step_rot) + np.linalg.norm(step_t) < tol:
            return Pose(q, t), current
    raise NonConvergenceError("pose refinement did not converge", current)


def refine(
    solutions: list[HandEyeSolution],
    rotation_weight: float = 1.0,
    max_iterations: int = 100,
) -> Pose:
    """Fuse repeated calibration results into one transform, all inputs
    weighted equally. Deterministic under input permutation."""
    if len(solutions) < 2:
        raise InsufficientDataError("refine requires at least two solutions")
    qs = np.array([s.tf_wm_cam.q for s in solutions])
    ts = np.array([s.tf_wm_cam.t for s in solutions])
    order = np.lexsort(np.concatenate([qs, ts], axis=1).T)
    pose, _ = _fit_mean_pose(qs[order], ts[order], rotation_weight, max_iterations)
    return pose


def refine_target(
    camera_traj: Trajectory,
    observations: list[TargetObservation],
    rotation_weight: float = 1.0,
    max_iterations: int = 100,
    min_observations: int = 10,
) -> Pose:
    """World pose of the fixed calibration target that best explains the
    camera trajectory and its camera -> target observations."""
    if len(observations) < min_observations:
        raise InsufficientDataError(
            f"need >= {min_observations} observations, got {len(observations)}"
        )
    times = np.array([o.timestamp for o in observations])
    cam_q, cam_t = se3.resample(camera_traj, times)
    obs_q = np.array([o.tf_cam_target.q for o in observations])
    obs_t = np.array([o.tf_cam_target.t for o in observations])
    est_q, est_t = se3.compose_qt(cam_q, cam_t, obs_q, obs_t)

    if float(np.max(cam_t.std(axis=0))) < 1e-6:
        warnings.warn(
            "all observations share one camera pose: target estimate is "
            "poorly conditioned (no averaging benefit over camera-pose error)",
            stacklevel=2,
        )
    pose, _ = _fit_mean_pose(est_q, est_t, rotation_weight, max_iterations)
    return pose


def calibrate(
    samples: list[HandEyeSample],
    set_size: int = 50,
    repetitions: int = 20,
    min_rotation: float = 5.0,
    rotation_weight: float = 1.0,
) -> RefinedHandEye:
    """Full flow: repeated block calibration per controller + refinement."""
    sols1, sols2 = calibrate_repeated(samples, set_size, repetitions, min_rotation)
    return RefinedHandEye(
        tf_wm1_cam=refine(sols1, rotation_weight),
        tf_wm2_cam=refine(sols2, rotation_weight),
        solutions_wm1=sols1,
        solutions_wm2=sols2,
    )


# ---------------------------------------------------------------------------
# Calibration report file

def _solution_to_dict(sol: HandEyeSolution) -> dict:
    return {
        "pose": {
            "quaternion_wxyz": [float(v) for v in sol.tf_wm_cam.q],
            "translation_m": [float(v) for v in sol.tf_wm_cam.t],
        },
        "residual_rotation_deg": sol.residual_rotation,
        "residual_translation_m": sol.residual_translation,
        "sample_count": sol.sample_count,
    }


def _solution_from_dict(data: dict) -> HandEyeSolution:
    return HandEyeSolution(
        tf_wm_cam=Pose(data["pose"]["quaternion_wxyz"], data["pose"]["translation_m"]),
        residual_rotation=data["residual_rotation_deg"],
        residual_translation=data["residual_translation_m"],
        sample_count=data["sample_count"],
    )


def save_calibration(result: RefinedHandEye, path, extra: dict | None = None) -> None:
    data = {
        "controller1": {
            "refined": {
                "quaternion_wxyz": [float(v) for v in result.tf_wm1_cam.q],
                "translation_m": [float(v) for v in result.tf_wm1_cam.t],
            },
            "solutions": [_solution_to_dict(s) for s in result.solutions_wm1],
        },
        "controller2": {
            "refined": {
                "quaternion_wxyz": [float(v) for v in result.tf_wm2_cam.q],
                "translation_m": [float(v) for v in result.tf_wm2_cam.t],
            },
            "solutions": [_solution_to_dict(s) for s in result.solutions_wm2],
        },
    }
    if extra:
        data.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_calibration(path) -> RefinedHandEye:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return RefinedHandEye(
        tf_wm1_cam=Pose(
            data["controller1"]["refined"]["quaternion_wxyz"],
            data["controller1"]["refined"]["translation_m"],
        ),
        tf_wm2_cam=Pose(
            data["controller2"]["refined"]["quaternion_wxyz"],
            data["controller2"]["refined"]["translation_m"],
        ),
        solutions_wm1=[_solution_from_dict(d) for d in data["controller1"]["solutions"]],
        solutions_wm2=[_solution_from_dict(d) for d in data["controller2"]["solutions"]],
    )
