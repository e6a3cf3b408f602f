"""Video to embedding sequence: detect, pose-filter, occlusion-filter, embed.

A frame is kept only when a face was found, no occluder overlaps the face
box beyond the threshold fraction, and the recovered head pose is within the
pitch/yaw/roll limits (defaults 25/20/20 degrees). Kept frames are embedded
and written to the .bmsq container with their original frame ordinals; a JSON
sidecar records the per-frame decisions and the exact landmark template for
reproducibility.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .backends import FaceObservation, FiducialBackend
from .bmsq import write_bmsq, write_manifest
from .embed import PatchEmbedder
from .pose import FACE_TEMPLATE, LANDMARK_NAMES, estimate_pose

VIDEO_SUFFIXES = (".avi", ".mp4", ".mov", ".mkv")


class ExtractError(RuntimeError):
    pass


@dataclass(frozen=True)
class Thresholds:
    pitch_max: float = 25.0
    yaw_max: float = 20.0
    roll_max: float = 20.0
    occlusion_overlap: float = 0.1  # fraction of the face box


@dataclass
class FrameMeta:
    frame_index: int
    face_found: bool
    pitch: float | None = None
    yaw: float | None = None
    roll: float | None = None
    occluded: bool = False
    kept: bool = False
    extra_faces: int = 0


@dataclass
class ExtractResult:
    video: str
    kept_frames: int
    total_frames: int
    meta: list[FrameMeta] = field(default_factory=list)


def _overlap_fraction(face_box, occluder_boxes) -> float:
    fx0, fy0, fx1, fy1 = face_box
    face_area = max(1.0, float(fx1 - fx0) * float(fy1 - fy0))
    covered = 0.0
    for ox0, oy0, ox1, oy1 in occluder_boxes:
        w = min(fx1, ox1) - max(fx0, ox0)
        h = min(fy1, oy1) - max(fy0, oy0)
        if w > 0 and h > 0:
            covered += float(w) * float(h)
    return covered / face_area


def _crop(frame: np.ndarray, box) -> np.ndarray:
    x0, y0, x1, y1 = box
    height, width = frame.shape[:2]
    x0 = max(0, min(x0, width - 1))
    x1 = max(x0 + 1, min(x1, width))
    y0 = max(0, min(y0, height - 1))
    y1 = max(y0 + 1, min(y1, height))
    return frame[y0:y1, x0:x1]


def analyze_frame(
    frame: np.ndarray,
    frame_index: int,
    thresholds: Thresholds,
    observation: FaceObservation | None,
) -> FrameMeta:
    meta = FrameMeta(frame_index=frame_index, face_found=observation is not None)
    if observation is None:
        return meta
    meta.extra_faces = observation.extra_faces
    meta.occluded = (
        _overlap_fraction(observation.box, observation.occluder_boxes)
        > thresholds.occlusion_overlap
    )
    if observation.landmarks is not None:
        pose = estimate_pose(observation.landmarks, (frame.shape[1], frame.shape[0]))
        if pose is not None:
            meta.pitch, meta.yaw, meta.roll = pose.pitch, pose.yaw, pose.roll
    pose_ok = (
        meta.pitch is not None
        and abs(meta.pitch) <= thresholds.pitch_max
        and abs(meta.yaw) <= thresholds.yaw_max
        and abs(meta.roll) <= thresholds.roll_max
    )
    meta.kept = meta.face_found and not meta.occluded and pose_ok
    return meta


def extract(
    video_path: str | Path,
    output_path: str | Path,
    thresholds: Thresholds = Thresholds(),
    backend=None,
    embedder=None,
    meta_path: str | Path | None = None,
) -> ExtractResult:
    """Process one video into ``output_path`` (.bmsq) plus optional sidecar.

    Raises ExtractError for undecodable input or when no frame survives the
    filters; no output file is written in either case.
    """
    backend = backend if backend is not None else FiducialBackend()
    embedder = embedder if embedder is not None else PatchEmbedder()
    video_path = Path(video_path)
    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise ExtractError(f"cannot decode video {video_path}")
    metas: list[FrameMeta] = []
    embeddings: list[np.ndarray] = []
    indices: list[int] = []
    frame_index = 0
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        observation = backend.analyze(frame)
        meta = analyze_frame(frame, frame_index, thresholds, observation)
        metas.append(meta)
        if meta.kept:
            embeddings.append(embedder.embed(_crop(frame, observation.box)))
            indices.append(frame_index)
        frame_index += 1
    cap.release()
    if frame_index == 0:
        raise ExtractError(f"cannot decode video {video_path} (no frames)")
    if not embeddings:
        raise ExtractError(f"no usable frames in {video_path}")
    write_bmsq(output_path, np.vstack(embeddings), indices)
    result = ExtractResult(
        video=str(video_path),
        kept_frames=len(indices),
        total_frames=frame_index,
        meta=metas,
    )
    if meta_path is not None:
        sidecar = {
            "video": str(video_path),
            "thresholds": asdict(thresholds),
            "backend": getattr(backend, "name", type(backend).__name__),
            "embedder": getattr(embedder, "name", type(embedder).__name__),
            "landmark_names": list(LANDMARK_NAMES),
            "landmark_template": FACE_TEMPLATE.tolist(),
            "frames": [asdict(m) for m in metas],
        }
        Path(meta_path).write_text(json.dumps(sidecar, indent=2) + "\n")
    return result


def extract_batch(
    video_dir: str | Path,
    out_dir: str | Path,
    thresholds: Thresholds = Thresholds(),
    backend=None,
    embedder=None,
    labels: dict[str, dict] | None = None,
) -> tuple[list[dict], list[tuple[str, str]]]:
    """Process every video in ``video_dir``; write embeddings + manifest.json.

    ``labels`` maps video stems to {identity_id, label, generator_tag}
    overrides; unlisted videos default to identity = stem, label 0, tag
    "unknown". Returns (manifest records, [(video, error)] failures).
    """
    video_dir = Path(video_dir)
    out_dir = Path(out_dir)
    emb_dir = out_dir / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)
    videos = sorted(
        p for p in video_dir.iterdir() if p.suffix.lower() in VIDEO_SUFFIXES
    )
    if not videos:
        raise ExtractError(f"no video files under {video_dir}")
    records: list[dict] = []
    failures: list[tuple[str, str]] = []
    for video in videos:
        stem = video.stem
        rel = f"embeddings/{stem}.bmsq"
        try:
            extract(
                video,
                out_dir / rel,
                thresholds=thresholds,
                backend=backend,
                embedder=embedder,
                meta_path=emb_dir / f"{stem}.meta.json",
            )
        except ExtractError as exc:
            failures.append((str(video), str(exc)))
            continue
        info = (labels or {}).get(stem, {})
        records.append(
            {
                "video_id": stem,
                "identity_id": info.get("identity_id", stem),
                "label": int(info.get("label", 0)),
                "generator_tag": info.get("generator_tag", "unknown"),
                "embedding_path": rel,
                "fps": 30.0,
            }
        )
    if records:
        write_manifest(records, out_dir)
    return records, failures
