"""Frame-analysis backends: locate the face, its landmarks, and occluders.

The fiducial backend reads the synthetic calibration targets rendered by
``faceextract.fixtures`` (gray face region, six saturated landmark dots,
white occluder rectangles). It exists so the full pipeline, including the
real solvePnP pose path, runs hermetically in CI. Real-footage backends plug
in through the same FaceObservation interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .pose import LANDMARK_NAMES

MIN_FACE_AREA = 800.0

# BGR ranges for the fixture palette; JPEG-compression tolerant
_FACE_RANGE = ((150, 150, 150), (210, 210, 210))
_OCCLUDER_RANGE = ((235, 235, 235), (255, 255, 255))
_LANDMARK_RANGES = {
    "nose_tip": ((0, 0, 190), (90, 90, 255)),        # red
    "chin": ((0, 190, 0), (90, 255, 90)),            # green
    "left_eye_outer": ((190, 0, 0), (255, 90, 90)),  # blue
    "right_eye_outer": ((0, 190, 190), (90, 255, 255)),   # yellow
    "mouth_left": ((190, 0, 190), (255, 90, 255)),   # magenta
    "mouth_right": ((190, 190, 0), (255, 255, 90)),  # cyan
}


@dataclass
class FaceObservation:
    """One analyzed frame: face box, landmark pixels, occluder boxes."""

    box: tuple[int, int, int, int]  # x0, y0, x1, y1
    landmarks: np.ndarray | None  # (6, 2) in LANDMARK_NAMES order, or None
    occluder_boxes: list[tuple[int, int, int, int]] = field(default_factory=list)
    extra_faces: int = 0


class FiducialBackend:
    """Detects the rendered calibration face by color segmentation."""

    name = "fiducial"

    def analyze(self, frame: np.ndarray) -> FaceObservation | None:
        face_mask = cv2.inRange(frame, *map(np.array, _FACE_RANGE))
        contours, _ = cv2.findContours(face_mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
        boxes = [
            cv2.boundingRect(c) for c in contours if cv2.contourArea(c) >= MIN_FACE_AREA
        ]
        if not boxes:
            return None
        boxes.sort(key=lambda b: b[2] * b[3], reverse=True)
        x, y, w, h = boxes[0]
        landmarks = self._landmarks(frame)
        occluders = self._occluders(frame)
        return FaceObservation(
            box=(x, y, x + w, y + h),
            landmarks=landmarks,
            occluder_boxes=occluders,
            extra_faces=len(boxes) - 1,
        )

    @staticmethod
    def _landmarks(frame: np.ndarray) -> np.ndarray | None:
        points = []
        for name in LANDMARK_NAMES:
            lo, hi = _LANDMARK_RANGES[name]
            mask = cv2.inRange(frame, np.array(lo), np.array(hi))
            moments = cv2.moments(mask, binaryImage=True)
            if moments["m00"] < 1.0:
                return None
            points.append((moments["m10"] / moments["m00"], moments["m01"] / moments["m00"]))
        return np.array(points, dtype=np.float64)

    @staticmethod
    def _occluders(frame: np.ndarray) -> list[tuple[int, int, int, int]]:
        mask = cv2.inRange(frame, *map(np.array, _OCCLUDER_RANGE))
        contours, _ = cv2.findContours(mask, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_SIMPLE)
        out = []
        for contour in contours:
            if cv2.contourArea(contour) < 25.0:
                continue
            x, y, w, h = cv2.boundingRect(contour)
            out.append((x, y, x + w, y + h))
        return out


_BACKENDS = {FiducialBackend.name: FiducialBackend}


def make_backend(name: str):
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(sorted(_BACKENDS))}"
        ) from None
