"""Evaluation harness: relative-transform stability, accuracy vs a reference
trajectory, and calibration improvement ratios.

Stability treats the relative transform between two bodies as nominally
constant and reports the statistics of its scalar distance and rotation-angle
series over time (mean, maximum deviation from the mean, standard deviation).
All report fields are millimeters and degrees; series kept alongside allow
plotting deviation over time.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import quat, se3
from .se3 import Pose, PoseDelta, Trajectory

MM = 1000.0


def _overlap_times(a: Trajectory, b: Trajectory) -> np.ndarray:
    t0 = max(a.times[0], b.times[0])
    t1 = min(a.times[-1], b.times[-1])
    if t0 > t1:
        raise ValueError(
            f"trajectories do not overlap in time: [{a.times[0]}, {a.times[-1]}] vs "
            f"[{b.times[0]}, {b.times[-1]}]"
        )
    mask = (a.times >= t0) & (a.times <= t1)
    times = a.times[mask]
    if times.shape[0] < 2:
        raise ValueError("fewer than two overlapping samples")
    return times


@dataclass
class StabilityReport:
    """Statistics of a nominally constant relative transform over time."""

    mean_transform: Pose
    mean_distance: float  # mm
    mean_angle: float  # degrees
    max_deviation: tuple[float, float]  # (mm, degrees)
    std_deviation: tuple[float, float]  # (mm, degrees)
    timestamps: np.ndarray = field(repr=False)
    distances_mm: np.ndarray = field(repr=False)
    angles_deg: np.ndarray = field(repr=False)

    @property
    def series(self) -> list[tuple[float, PoseDelta]]:
        """Per-sample absolute deviation from the mean distance/angle."""
        dev_m = np.abs(self.distances_mm - self.mean_distance) / MM
        dev_deg = np.abs(self.angles_deg - self.mean_angle)
        return [
            (float(t), PoseDelta(float(d), float(a)))
            for t, d, a in zip(self.timestamps, dev_m, dev_deg)
        ]

    def to_dict(self) -> dict:
        return {
            "mean_transform": {
                "quaternion_wxyz": [float(v) for v in self.mean_transform.q],
                "translation_m": [float(v) for v in self.mean_transform.t],
            },
            "mean_distance_mm": self.mean_distance,
            "mean_angle_deg": self.mean_angle,
            "max_deviation_mm": self.max_deviation[0],
            "max_deviation_deg": self.max_deviation[1],
            "std_deviation_mm": self.std_deviation[0],
            "std_deviation_deg": self.std_deviation[1],
            "timestamps": [float(v) for v in self.timestamps],
            "distances_mm": [float(v) for v in self.distances_mm],
            "angles_deg": [float(v) for v in self.angles_deg],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StabilityReport":
        mt = data["mean_transform"]
        return cls(
            mean_transform=Pose(mt["quaternion_wxyz"], mt["translation_m"]),
            mean_distance=data["mean_distance_mm"],
            mean_angle=data["mean_angle_deg"],
            max_deviation=(data["max_deviation_mm"], data["max_deviation_deg"]),
            std_deviation=(data["std_deviation_mm"], data["std_deviation_deg"]),
            timestamps=np.array(data["timestamps"]),
            distances_mm=np.array(data["distances_mm"]),
            angles_deg=np.array(data["angles_deg"]),
        )


def stability(traj_a: Trajectory, traj_b: Trajectory) -> StabilityReport:
    """Analyze the relative transform B-in-A-frame over the common time span."""
    if len(traj_a) == len(traj_b) and np.array_equal(traj_a.times, traj_b.times):
        times = traj_a.times
        qa, ta = traj_a.quaternions, traj_a.translations
        qb, tb = traj_b.quaternions, traj_b.translations
    else:
        times = _overlap_times(traj_a, traj_b)
        qa, ta = se3.resample(traj_a, times)
        qb, tb = se3.resample(traj_b, times)
    inv_qa, inv_ta = se3.inverse_qt(qa, ta)
    rel_q, rel_t = se3.compose_qt(inv_qa, inv_ta, qb, tb)

    dist_mm = np.linalg.norm(rel_t, axis=-1) * MM
    ang_deg = np.degrees(quat.rotation_angle(rel_q))
    mean_dist = float(dist_mm.mean())
    mean_ang = float(ang_deg.mean())
    mean_tf = Pose(quat.mean(rel_q), rel_t.mean(axis=0))
    return StabilityReport(
        mean_transform=mean_tf,
        mean_distance=mean_dist,
        mean_angle=mean_ang,
        max_deviation=(
            float(np.max(np.abs(dist_mm - mean_dist))),
            float(np.max(np.abs(ang_deg - mean_ang))),
        ),
        std_deviation=(float(dist_mm.std()), float(ang_deg.std())),
        timestamps=times.copy(),
        distances_mm=dist_mm,
        angles_deg=ang_deg,
    )


@dataclass
class AccuracyStats:
    """Per-sample pose error of a candidate trajectory against a reference."""

    mean: tuple[float, float]  # (mm, degrees)
    max: tuple[float, float]
    std: tuple[float, float]
    timestamps: np.ndarray = field(repr=False)
    errors_mm: np.ndarray = field(repr=False)
    errors_deg: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "mean_mm": self.mean[0],
            "mean_deg": self.mean[1],
            "max_mm": self.max[0],
            "max_deg": self.max[1],
            "std_mm": self.std[0],
            "std_deg": self.std[1],
            "timestamps": [float(v) for v in self.timestamps],
            "errors_mm": [float(v) for v in self.errors_mm],
            "errors_deg": [float(v) for v in self.errors_deg],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AccuracyStats":
        return cls(
            mean=(data["mean_mm"], data["mean_deg"]),
            max=(data["max_mm"], data["max_deg"]),
            std=(data["std_mm"], data["std_deg"]),
            timestamps=np.array(data["timestamps"]),
            errors_mm=np.array(data["errors_mm"]),
            errors_deg=np.array(data["errors_deg"]),
        )


@dataclass
class AccuracyReport:
    """Accuracy of each camera-pose source against the same reference."""

    per_source: dict[str, AccuracyStats]

    def to_dict(self) -> dict:
        return {name: stats.to_dict() for name, stats in self.per_source.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "AccuracyReport":
        return cls({name: AccuracyStats.from_dict(d) for name, d in data.items()})


def accuracy(candidate: Trajectory, reference: Trajectory) -> AccuracyStats:
    """Per-sample deviation of candidate poses from the (interpolated)
    reference: Euclidean distance and geodesic rotation angle."""
    t0 = max(candidate.times[0], reference.times[0])
    t1 = min(candidate.times[-1], reference.times[-1])
    mask = (candidate.times >= t0) & (candidate.times <= t1)
    if not np.any(mask):
        raise ValueError("candidate and reference do not overlap in time")
    times = candidate.times[mask]
    ref_q, ref_t = se3.resample(reference, times)
    cand_q = candidate.quaternions[mask]
    cand_t = candidate.translations[mask]
    err_mm = np.linalg.norm(cand_t - ref_t, axis=-1) * MM
    err_deg = np.degrees(quat.angle_between(cand_q, ref_q))
    return AccuracyStats(
        mean=(float(err_mm.mean()), float(err_deg.mean())),
        max=(float(err_mm.max()), float(err_deg.max())),
        std=(float(err_mm.std()), float(err_deg.std())),
        timestamps=times.copy(),
        errors_mm=err_mm,
        errors_deg=err_deg,
    )


def improvement_factor(raw, refined: Pose, truth: Pose) -> tuple[float, float]:
    """Ratio of mean raw calibration error to refined error (mm and degrees).

    A refined error of exactly zero yields an infinity sentinel; 0/0 is
    reported as 1 by convention.
    """
    if len(raw) == 0:
        raise ValueError("improvement_factor requires at least one raw solution")
    poses = [getattr(s, "tf_wm_cam", s) for s in raw]
    raw_mm = float(np.mean([se3.delta(p, truth).translation_error for p in poses])) * MM
    raw_deg = float(np.mean([se3.delta(p, truth).rotation_error for p in poses]))
    ref = se3.delta(refined, truth)
    ref_mm = ref.translation_error * MM
    ref_deg = ref.rotation_error

    def _ratio(num: float, den: float) -> float:
        if den == 0.0:
            return 1.0 if num == 0.0 else math.inf
        return num / den

    return _ratio(raw_mm, ref_mm), _ratio(raw_deg, ref_deg)


# ---------------------------------------------------------------------------
# Report files

def write_series_csv(path, timestamps, distances_mm, angles_deg) -> None:
    """Full-precision per-timestamp series for external plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "distance_mm", "angle_deg"])
        for t, d, a in zip(timestamps, distances_mm, angles_deg):
            writer.writerow([repr(float(t)), repr(float(d)), repr(float(a))])


def write_table_csv(path, header: list[str], rows: list[list]) -> None:
    """Table-style CSV; numeric cells formatted at two decimals."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [f"{v:.2f}" if isinstance(v, float) else v for v in row]
            )


def save_report(data: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
