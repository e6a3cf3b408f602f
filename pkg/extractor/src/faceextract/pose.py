"""Head-pose estimation from 6 facial landmarks via a perspective-n-point solve.

The canonical 3D template below uses camera-style axes (+x right, +y down,
+z toward the camera's view direction) in roughly millimeter units. Rotations
compose as R = Rz(roll) @ Ry(yaw) @ Rx(pitch); the same convention is used to
render test fixtures, so recovered angles are directly comparable to the
ground truth a fixture was drawn with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

LANDMARK_NAMES = (
    "nose_tip",
    "chin",
    "left_eye_outer",
    "right_eye_outer",
    "mouth_left",
    "mouth_right",
)

FACE_TEMPLATE = np.array(
    [
        [0.0, 0.0, 0.0],        # nose tip
        [0.0, 66.0, -13.0],     # chin
        [-45.0, -40.0, -30.0],  # left eye outer corner
        [45.0, -40.0, -30.0],   # right eye outer corner
        [-30.0, 35.0, -25.0],   # mouth left
        [30.0, 35.0, -25.0],    # mouth right
    ],
    dtype=np.float64,
)


@dataclass(frozen=True)
class HeadPose:
    pitch: float
    yaw: float
    roll: float

    def within(self, pitch_max: float, yaw_max: float, roll_max: float) -> bool:
        return (
            abs(self.pitch) <= pitch_max
            and abs(self.yaw) <= yaw_max
            and abs(self.roll) <= roll_max
        )


def camera_matrix(width: int, height: int) -> np.ndarray:
    focal = float(width)
    return np.array(
        [[focal, 0.0, width / 2.0], [0.0, focal, height / 2.0], [0.0, 0.0, 1.0]],
        dtype=np.float64,
    )


def rotation_matrix(pitch: float, yaw: float, roll: float) -> np.ndarray:
    """R = Rz(roll) @ Ry(yaw) @ Rx(pitch), angles in degrees."""
    a, b, c = (math.radians(v) for v in (pitch, yaw, roll))
    rx = np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])
    ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    rz = np.array([[math.cos(c), -math.sin(c), 0], [math.sin(c), math.cos(c), 0], [0, 0, 1]])
    return rz @ ry @ rx


def euler_from_rotation(rot: np.ndarray) -> tuple[float, float, float]:
    """(pitch, yaw, roll) in degrees for R = Rz(roll) @ Ry(yaw) @ Rx(pitch)."""
    yaw = math.asin(max(-1.0, min(1.0, -float(rot[2, 0]))))
    pitch = math.atan2(float(rot[2, 1]), float(rot[2, 2]))
    roll = math.atan2(float(rot[1, 0]), float(rot[0, 0]))
    return math.degrees(pitch), math.degrees(yaw), math.degrees(roll)


def estimate_pose(landmarks: np.ndarray, frame_size: tuple[int, int]) -> HeadPose | None:
    """Pose from the 6 landmark pixel positions; None if the solve fails.

    ``landmarks`` rows follow LANDMARK_NAMES order; ``frame_size`` is
    (width, height).
    """
    points = np.ascontiguousarray(landmarks, dtype=np.float64)
    if points.shape != (len(LANDMARK_NAMES), 2):
        raise ValueError(f"expected {len(LANDMARK_NAMES)}x2 landmarks, got {points.shape}")
    ok, rvec, _ = cv2.solvePnP(
        FACE_TEMPLATE,
        points.reshape(-1, 1, 2),
        camera_matrix(*frame_size),
        None,
        flags=cv2.SOLVEPNP_ITERATIVE,
    )
    if not ok:
        return None
    rot, _ = cv2.Rodrigues(rvec)
    pitch, yaw, roll = euler_from_rotation(rot)
    return HeadPose(pitch=pitch, yaw=yaw, roll=roll)
