"""Synthetic calibration clips with known ground-truth pose per frame.

Each frame renders the pose module's 3D face template under a chosen
rotation: a gray face polygon (an ellipse of 3D points rigid with the head),
six saturated landmark dots at the projected template points, and optionally
a white occluder rectangle over the face. Because the renderer and the pose
estimator share the template, camera model, and rotation convention, a
frame's recovered pose can be checked against the angles it was drawn with.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Callable, Iterable

import cv2
import numpy as np

from .pose import FACE_TEMPLATE, LANDMARK_NAMES, camera_matrix, rotation_matrix

FRAME_SIZE = (640, 480)
FACE_DISTANCE = 500.0

_FACE_COLOR = (180, 180, 180)
_OCCLUDER_COLOR = (255, 255, 255)
_DOT_COLORS = {
    "nose_tip": (0, 0, 255),
    "chin": (0, 255, 0),
    "left_eye_outer": (255, 0, 0),
    "right_eye_outer": (0, 255, 255),
    "mouth_left": (255, 0, 255),
    "mouth_right": (255, 255, 0),
}


def _face_outline_points() -> np.ndarray:
    # ellipse of head-rigid 3D points enclosing all template landmarks
    u = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
    x = 70.0 * np.cos(u)
    y = 95.0 * np.sin(u) + 8.0
    z = np.full_like(u, -20.0)
    return np.column_stack([x, y, z])


_OUTLINE = _face_outline_points()


def render_frame(
    pose_deg: tuple[float, float, float],
    occluded: bool = False,
    size: tuple[int, int] = FRAME_SIZE,
) -> np.ndarray:
    width, height = size
    frame = np.zeros((height, width, 3), dtype=np.uint8)
    rot = rotation_matrix(*pose_deg)
    rvec, _ = cv2.Rodrigues(rot)
    tvec = np.array([0.0, 0.0, FACE_DISTANCE])
    cam = camera_matrix(width, height)

    outline, _ = cv2.projectPoints(_OUTLINE, rvec, tvec, cam, None)
    cv2.fillPoly(frame, [outline.reshape(-1, 2).astype(np.int32)], _FACE_COLOR)

    dots, _ = cv2.projectPoints(FACE_TEMPLATE, rvec, tvec, cam, None)
    for name, point in zip(LANDMARK_NAMES, dots.reshape(-1, 2)):
        cv2.circle(frame, (int(round(point[0])), int(round(point[1]))), 5,
                   _DOT_COLORS[name], -1)

    if occluded:
        pts = outline.reshape(-1, 2)
        x0, y0 = pts.min(axis=0)
        x1, y1 = pts.max(axis=0)
        # cover the middle band of the face, landmarks included
        cv2.rectangle(
            frame,
            (int(x0 + 0.1 * (x1 - x0)), int(y0 + 0.25 * (y1 - y0))),
            (int(x1 - 0.1 * (x1 - x0)), int(y1 - 0.25 * (y1 - y0))),
            _OCCLUDER_COLOR,
            -1,
        )
    return frame


def render_clip(
    path: str | Path,
    n_frames: int,
    pose_fn: Callable[[int], tuple[float, float, float]] = lambda i: (0.0, 0.0, 0.0),
    occluded_frames: Iterable[int] = (),
    blank_frames: Iterable[int] = (),
    fps: float = 30.0,
) -> Path:
    """Write an MJPG clip; returns the path. ``blank_frames`` carry no face."""
    path = Path(path)
    occluded = set(occluded_frames)
    blank = set(blank_frames)
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, FRAME_SIZE
    )
    if not writer.isOpened():
        raise RuntimeError(f"cannot open video writer for {path}")
    for i in range(n_frames):
        if i in blank:
            frame = np.zeros((FRAME_SIZE[1], FRAME_SIZE[0], 3), dtype=np.uint8)
        else:
            frame = render_frame(pose_fn(i), occluded=i in occluded)
        writer.write(frame)
    writer.release()
    return path
