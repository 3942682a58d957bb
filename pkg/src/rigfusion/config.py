"""Pipeline configuration: one schema-validated structure for every stage.

The on-disk format is JSON. Every section is optional and falls back to the
documented defaults; unknown keys anywhere are rejected so typos fail loudly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .se3 import Pose
from .simulate import NoiseModel, RigConfig, TrajectoryParams
from .ukf import UkfParams
from . import quat


@dataclass(frozen=True)
class RigSection:
    separation_m: float = 0.526
    camera_drop_m: float = 0.9
    relative_yaw_deg: float = 179.5

    def build(self) -> RigConfig:
        return RigConfig.default(self.separation_m, self.camera_drop_m, self.relative_yaw_deg)


@dataclass(frozen=True)
class NoiseSection:
    sigma_translation_m: float = 1e-3
    sigma_rotation_deg: float = 0.1

    def build(self, seed: int = 0) -> NoiseModel:
        return NoiseModel(self.sigma_translation_m, self.sigma_rotation_deg, seed)


@dataclass(frozen=True)
class TrajectorySection:
    edge_m: float = 1.0
    period_s: float = 12.0
    rate_hz: float = 100.0
    duration_s: float = 120.0
    rot_amplitude_deg: float = 20.0
    rot_freqs_hz: tuple[float, float, float] = (0.9, 0.7, 1.1)

    def build(self) -> TrajectoryParams:
        return TrajectoryParams(
            edge=self.edge_m,
            period=self.period_s,
            rate=self.rate_hz,
            duration=self.duration_s,
            rot_amplitude_deg=self.rot_amplitude_deg,
            rot_freqs_hz=tuple(self.rot_freqs_hz),
        )


@dataclass(frozen=True)
class TargetSection:
    translation_m: tuple[float, float, float] = (0.0, 0.0, 1.5)
    rotvec_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def build(self) -> Pose:
        return Pose(
            quat.from_rotvec(np.radians(self.rotvec_deg)), np.asarray(self.translation_m)
        )


@dataclass(frozen=True)
class HandEyeSection:
    set_size: int = 50
    repetitions: int = 20
    min_rotation_deg: float = 5.0
    sample_interval_s: float = 0.1
    rotation_weight: float = 1.0


@dataclass(frozen=True)
class UkfSection:
    alpha: float = 0.3
    beta: float = 2.0
    kappa: float = 0.0
    jerk_psd: float = 1.0e6
    angular_accel_psd: float = 20.0
    meas_sigma_translation_m: float | None = None  # None -> noise section value
    meas_sigma_rotation_deg: float | None = None
    velocity_sigma: float = 0.5
    angular_velocity_sigma: float = 1.0
    accel_sigma: float = 2.0
    time_offset_s: float = 0.0

    def build(self) -> UkfParams:
        return UkfParams(
            alpha=self.alpha,
            beta=self.beta,
            kappa=self.kappa,
            jerk_psd=self.jerk_psd,
            angular_accel_psd=self.angular_accel_psd,
        )


# acceptance-style [low, high] bands checked by the report stage
_DEFAULT_THRESHOLDS: dict[str, tuple[float, float]] = {
    "tracking_eps_max_mm": (3.49, 6.49),
    "tracking_eps_max_deg": (0.35, 0.65),
    "tracking_std_mm": (0.90, 1.68),
    "tracking_std_deg": (0.091, 0.169),
    "cams_mean_mm": (2.47, 4.59),
    "cams_mean_deg": (0.147, 0.273),
    "fused_mean_mm": (1.71, 3.17),
    "fused_mean_deg": (0.045, 0.135),
    "improvement_translation_min": (2.5, float("inf")),
}


@dataclass(frozen=True)
class ReportSection:
    thresholds: dict = field(default_factory=lambda: dict(_DEFAULT_THRESHOLDS))


@dataclass(frozen=True)
class PipelineConfig:
    rig: RigSection = field(default_factory=RigSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    target: TargetSection = field(default_factory=TargetSection)
    handeye: HandEyeSection = field(default_factory=HandEyeSection)
    ukf: UkfSection = field(default_factory=UkfSection)
    report: ReportSection = field(default_factory=ReportSection)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


_SECTION_TYPES = {
    "rig": RigSection,
    "noise": NoiseSection,
    "trajectory": TrajectorySection,
    "target": TargetSection,
    "handeye": HandEyeSection,
    "ukf": UkfSection,
}


def _build_section(cls, data: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {sorted(unknown)}")
    coerced = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if isinstance(value, list):
            value = tuple(value)
        coerced[f.name] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    allowed = set(_SECTION_TYPES) | {"report", "seed"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ConfigError(f"section '{name}' must be an object")
            kwargs[name] = _build_section(cls, data[name], name)
    if "report" in data:
        rep = data["report"]
        if not isinstance(rep, dict) or set(rep) - {"thresholds"}:
            raise ConfigError("section 'report' accepts only a 'thresholds' object")
        thresholds = dict(_DEFAULT_THRESHOLDS)
        for key, band in rep.get("thresholds", {}).items():
            if key not in _DEFAULT_THRESHOLDS:
                raise ConfigError(f"unknown report threshold {key!r}")
            if not (isinstance(band, (list, tuple)) and len(band) == 2):
                raise ConfigError(f"threshold {key!r} must be a [low, high] pair")
            lo = float("-inf") if band[0] is None else float(band[0])
            hi = float("inf") if band[1] is None else float(band[1])
            thresholds[key] = (lo, hi)
        kwargs["report"] = ReportSection(thresholds)
    if "seed" in data:
        seed = data["seed"]
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("'seed' must be a non-negative integer")
        kwargs["seed"] = seed
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(data)


def save_config(cfg: PipelineConfig, path) -> None:
    data = cfg.to_dict()
    # JSON cannot carry inf; the open-ended threshold band is stored as null
    for key, band in data["report"]["thresholds"].items():
        data["report"]["thresholds"][key] = [
            None if v in (float("inf"), float("-inf")) else v for v in band
        ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
