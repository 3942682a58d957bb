"""rigfusion: camera-stick tracking simulation, calibration, and fusion toolkit."""

from .se3 import (
    Pose,
    PoseDelta,
    StampedPose,
    Trajectory,
    compose,
    delta,
    interpolate,
    inverse,
    mean_pose,
)

__version__ = "0.1.0"

__all__ = [
    "Pose",
    "PoseDelta",
    "StampedPose",
    "Trajectory",
    "compose",
    "delta",
    "interpolate",
    "inverse",
    "mean_pose",
    "__version__",
]
