"""Synthetic ground-truth generator for the two-controller camera stick.

Builds the rigid stick geometry, drives the camera body along a smooth
square test path with rotations about all three axes, and derives noisy
controller tracks plus noisy camera-to-target observations from it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import quat, se3
from .se3 import Pose, Trajectory

CAMERA = "camera"
CONTROLLER1 = "controller1"
CONTROLLER2 = "controller2"


@dataclass(frozen=True)
class RigConfig:
    """Rigid stick geometry: controller-i -> camera transforms.

    The derived controller1 -> controller2 transform is fixed by construction,
    which is what makes the inter-controller stability analysis meaningful.
    """

    tf_wm1_cam: Pose
    tf_wm2_cam: Pose

    @property
    def tf_wm(self) -> Pose:
        return se3.compose(self.tf_wm1_cam, se3.inverse(self.tf_wm2_cam))

    @classmethod
    def default(
        cls,
        separation: float = 0.526,
        camera_drop: float = 0.9,
        relative_yaw_deg: float = 179.5,
    ) -> "RigConfig":
        """Stick with two controllers `separation` apart, mounted nearly
        back-to-back about the vertical, and the camera `camera_drop` below.

        World convention: +z points down (toward the tank floor); the camera
        at rest is the identity pose. The relative yaw is split evenly
        between the two controller mounts, which keeps both controller ->
        camera rotations near 90 degrees and away of the 180-degree
        degeneracy of the linear hand-eye solve.
        """
        half = 0.5 * separation
        half_yaw = 0.5 * np.radians(relative_yaw_deg)
        wm1 = Pose(quat.about_axis(2, -half_yaw), [-half, 0.0, -camera_drop])
        wm2 = Pose(quat.about_axis(2, half_yaw), [half, 0.0, -camera_drop])
        cam = Pose.identity()
        return cls(
            tf_wm1_cam=se3.compose(se3.inverse(wm1), cam),
            tf_wm2_cam=se3.compose(se3.inverse(wm2), cam),
        )


@dataclass(frozen=True)
class NoiseModel:
    """Per-axis i.i.d. Gaussian pose noise; deterministic for a fixed seed."""

    sigma_translation: float = 1e-3  # meters, per axis
    sigma_rotation_deg: float = 0.1  # degrees, per axis
    seed: int = 0

    def __post_init__(self):
        if self.sigma_translation < 0.0 or self.sigma_rotation_deg < 0.0:
            raise ValueError("noise sigmas must be non-negative")


@dataclass(frozen=True)
class TargetObservation:
    timestamp: float
    tf_cam_target: Pose


@dataclass(frozen=True)
class TrajectoryParams:
    edge: float = 1.0  # square edge length (m)
    period: float = 12.0  # seconds per lap
    rate: float = 100.0  # samples per second
    duration: float | None = 120.0  # None -> one lap
    rot_amplitude_deg: float = 20.0
    rot_freqs_hz: tuple[float, float, float] = (0.9, 0.7, 1.1)


@dataclass
class SimScene:
    world_target: Pose
    ground_truth: dict[str, Trajectory]
    noisy: dict[str, Trajectory]
    observations: list[TargetObservation]
    rig: RigConfig
    noise: NoiseModel
    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    seed: int = 0


def _smoothstep(u: np.ndarray) -> np.ndarray:
    # C2 quintic ramp: zero velocity and acceleration at both ends
    return u * u * u * (6.0 * u * u - 15.0 * u + 10.0)


def _trapezoid_wave(u: np.ndarray) -> np.ndarray:
    """Periodic C2 wave: ramps -1 -> +1, dwells, ramps back, dwells.

    The dwell quarters pin the extreme coordinates exactly, so sampled
    positions attain the square's bounding box to machine precision.
    """
    u = np.mod(u, 1.0)
    out = np.empty_like(u)
    ramp_up = u < 0.25
    dwell_hi = (u >= 0.25) & (u < 0.5)
    ramp_dn = (u >= 0.5) & (u < 0.75)
    dwell_lo = u >= 0.75
    out[ramp_up] = -1.0 + 2.0 * _smoothstep(u[ramp_up] / 0.25)
    out[dwell_hi] = 1.0
    out[ramp_dn] = 1.0 - 2.0 * _smoothstep((u[ramp_dn] - 0.5) / 0.25)
    out[dwell_lo] = -1.0
    return out


def square_trajectory(
    edge: float,
    period: float,
    rate: float,
    *,
    duration: float | None = None,
    rot_amplitude_deg: float = 20.0,
    rot_freqs_hz: tuple[float, float, float] = (0.9, 0.7, 1.1),
    body_id: str = CAMERA,
) -> Trajectory:
    """Camera-body ground truth tracing a square of side `edge` in the x-y
    plane with smooth sinusoidal rotations about all three axes."""
    if edge <= 0.0 or period <= 0.0 or rate <= 0.0:
        raise ValueError("edge, period, and rate must be positive")
    if duration is None:
        duration = period
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    n = int(round(duration * rate))
    if n < 2:
        raise ValueError("trajectory must contain at least two samples")
    times = np.arange(n) / rate
    u = times / period
    x = 0.5 * edge * _trapezoid_wave(u)
    y = 0.5 * edge * _trapezoid_wave(u - 0.25)
    trans = np.stack([x, y, np.zeros(n)], axis=-1)

    amp = np.radians(rot_amplitude_deg)
    phases = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)
    angles = [
        amp * np.sin(2.0 * np.pi * f * times + ph) for f, ph in zip(rot_freqs_hz, phases)
    ]
    qs = quat.mul(
        quat.mul(quat.about_axis(0, angles[0]), quat.about_axis(1, angles[1])),
        quat.about_axis(2, angles[2]),
    )
    return Trajectory(body_id, times, qs, trans)


def propagate_rig(camera_truth: Trajectory, rig: RigConfig) -> tuple[Trajectory, Trajectory]:
    """Exact controller tracks implied by the camera track and the rig."""
    out = []
    for body, tf in ((CONTROLLER1, rig.tf_wm1_cam), (CONTROLLER2, rig.tf_wm2_cam)):
        inv = se3.inverse(tf)
        out.append(se3.transform_trajectory(camera_truth, inv, body_id=body))
    return out[0], out[1]


def _noise_arrays(
    rng: np.random.Generator, n: int, model: NoiseModel
) -> tuple[np.ndarray, np.ndarray]:
    """Translation offsets and right-multiplied noise quaternions for n samples.

    Draw order (translations first, then per-axis angles) is part of the
    reproducibility contract.
    """
    dt = rng.normal(0.0, model.sigma_translation, size=(n, 3))
    ang = rng.normal(0.0, np.radians(model.sigma_rotation_deg), size=(n, 3))
    dq = quat.mul(
        quat.mul(quat.about_axis(0, ang[:, 0]), quat.about_axis(1, ang[:, 1])),
        quat.about_axis(2, ang[:, 2]),
    )
    return dt, dq


def add_noise(traj: Trajectory, model: NoiseModel) -> Trajectory:
    """Independent per-sample pose noise: additive translation offsets and a
    right-multiplied small rotation built from per-axis angles."""
    if model.sigma_translation == 0.0 and model.sigma_rotation_deg == 0.0:
        return Trajectory(traj.body_id, traj.times, traj.quaternions, traj.translations)
    rng = np.random.default_rng(model.seed)
    dt, dq = _noise_arrays(rng, len(traj), model)
    qs = quat.canonical(quat.mul(traj.quaternions, dq))
    return Trajectory(traj.body_id, traj.times, qs, traj.translations + dt)


def observe_target(
    camera_truth: Trajectory, world_target: Pose, model: NoiseModel
) -> list[TargetObservation]:
    """Noisy camera -> target transforms for every camera sample."""
    inv_q, inv_t = se3.inverse_qt(camera_truth.quaternions, camera_truth.translations)
    obs_q, obs_t = se3.compose_qt(
        inv_q, inv_t, np.broadcast_to(world_target.q, inv_q.shape), world_target.t
    )
    if model.sigma_translation > 0.0 or model.sigma_rotation_deg > 0.0:
        rng = np.random.default_rng(model.seed)
        dt, dq = _noise_arrays(rng, len(camera_truth), model)
        obs_q = quat.canonical(quat.mul(obs_q, dq))
        obs_t = obs_t + dt
    return [
        TargetObservation(float(t), Pose(q, tr))
        for t, q, tr in zip(camera_truth.times, obs_q, obs_t)
    ]


def _child_seeds(seed: int, n: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def build_scene(
    rig: RigConfig,
    noise: NoiseModel,
    trajectory: TrajectoryParams,
    world_target: Pose,
    seed: int,
) -> SimScene:
    """Simulate one dataset; each noisy stream gets its own derived seed so
    the controller errors are statistically independent."""
    camera = square_trajectory(
        trajectory.edge,
        trajectory.period,
        trajectory.rate,
        duration=trajectory.duration,
        rot_amplitude_deg=trajectory.rot_amplitude_deg,
        rot_freqs_hz=trajectory.rot_freqs_hz,
    )
    c1, c2 = propagate_rig(camera, rig)
    s1, s2, s3 = _child_seeds(seed, 3)
    noisy1 = add_noise(c1, NoiseModel(noise.sigma_translation, noise.sigma_rotation_deg, s1))
    noisy2 = add_noise(c2, NoiseModel(noise.sigma_translation, noise.sigma_rotation_deg, s2))
    observations = observe_target(
        camera, world_target, NoiseModel(noise.sigma_translation, noise.sigma_rotation_deg, s3)
    )
    return SimScene(
        world_target=world_target,
        ground_truth={CAMERA: camera, CONTROLLER1: c1, CONTROLLER2: c2},
        noisy={CONTROLLER1: noisy1, CONTROLLER2: noisy2},
        observations=observations,
        rig=rig,
        noise=noise,
        trajectory=trajectory,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Scene bundle on disk

_TRUTH_FILES = {
    CAMERA: "camera_truth.txt",
    CONTROLLER1: "controller1_truth.txt",
    CONTROLLER2: "controller2_truth.txt",
}
_NOISY_FILES = {CONTROLLER1: "controller1_noisy.txt", CONTROLLER2: "controller2_noisy.txt"}
OBSERVATIONS_FILE = "observations.txt"
SCENE_META_FILE = "scene.json"


def _pose_to_list(p: Pose) -> list[float]:
    return [float(v) for v in np.concatenate([p.q, p.t])]


def _pose_from_list(vals) -> Pose:
    return Pose(vals[:4], vals[4:])


def save_observations(observations: list[TargetObservation], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# camera->target observations: timestamp tx ty tz qx qy qz qw\n")
        for obs in observations:
            p = obs.tf_cam_target
            tx, ty, tz = (float(v) for v in p.t)
            w, x, y, z = (float(v) for v in p.q)
            fh.write(f"{obs.timestamp!r} {tx!r} {ty!r} {tz!r} {x!r} {y!r} {z!r} {w!r}\n")


def load_observations(path) -> list[TargetObservation]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.split()]
            if len(vals) != 8:
                raise ValueError(f"expected 8 fields per observation line, got {len(vals)}")
            x, y, z, w = vals[4:8]
            out.append(TargetObservation(vals[0], Pose([w, x, y, z], vals[1:4])))
    return out


def save_scene(scene: SimScene, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for body, fname in _TRUTH_FILES.items():
        se3.save_trajectory(scene.ground_truth[body], directory / fname)
    for body, fname in _NOISY_FILES.items():
        se3.save_trajectory(scene.noisy[body], directory / fname)
    save_observations(scene.observations, directory / OBSERVATIONS_FILE)
    meta = {
        "seed": scene.seed,
        "world_target": _pose_to_list(scene.world_target),
        "rig": {
            "tf_wm1_cam": _pose_to_list(scene.rig.tf_wm1_cam),
            "tf_wm2_cam": _pose_to_list(scene.rig.tf_wm2_cam),
        },
        "noise": {
            "sigma_translation": scene.noise.sigma_translation,
            "sigma_rotation_deg": scene.noise.sigma_rotation_deg,
            "seed": scene.noise.seed,
        },
        "trajectory": {
            "edge": scene.trajectory.edge,
            "period": scene.trajectory.period,
            "rate": scene.trajectory.rate,
            "duration": scene.trajectory.duration,
            "rot_amplitude_deg": scene.trajectory.rot_amplitude_deg,
            "rot_freqs_hz": list(scene.trajectory.rot_freqs_hz),
        },
    }
    with open(directory / SCENE_META_FILE, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scene(directory) -> SimScene:
    directory = Path(directory)
    with open(directory / SCENE_META_FILE, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    rig = RigConfig(
        tf_wm1_cam=_pose_from_list(meta["rig"]["tf_wm1_cam"]),
        tf_wm2_cam=_pose_from_list(meta["rig"]["tf_wm2_cam"]),
    )
    noise = NoiseModel(
        sigma_translation=meta["noise"]["sigma_translation"],
        sigma_rotation_deg=meta["noise"]["sigma_rotation_deg"],
        seed=meta["noise"]["seed"],
    )
    tp = meta["trajectory"]
    trajectory = TrajectoryParams(
        edge=tp["edge"],
        period=tp["period"],
        rate=tp["rate"],
        duration=tp["duration"],
        rot_amplitude_deg=tp["rot_amplitude_deg"],
        rot_freqs_hz=tuple(tp["rot_freqs_hz"]),
    )
    ground_truth = {
        body: se3.load_trajectory(directory / fname) for body, fname in _TRUTH_FILES.items()
    }
    noisy = {
        body: se3.load_trajectory(directory / fname) for body, fname in _NOISY_FILES.items()
    }
    observations = load_observations(directory / OBSERVATIONS_FILE)
    return SimScene(
        world_target=_pose_from_list(meta["world_target"]),
        ground_truth=ground_truth,
        noisy=noisy,
        observations=observations,
        rig=rig,
        noise=noise,
        trajectory=trajectory,
        seed=meta["seed"],
    )
