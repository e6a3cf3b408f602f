"""Video to per-frame face-embedding sequences, with pose and occlusion filters."""

from .pipeline import ExtractError, ExtractResult, FrameMeta, Thresholds, extract, extract_batch
from .pose import FACE_TEMPLATE, LANDMARK_NAMES, HeadPose, estimate_pose

__version__ = "0.1.0"

__all__ = [
    "ExtractError",
    "ExtractResult",
    "FACE_TEMPLATE",
    "FrameMeta",
    "HeadPose",
    "LANDMARK_NAMES",
    "Thresholds",
    "estimate_pose",
    "extract",
    "extract_batch",
]
