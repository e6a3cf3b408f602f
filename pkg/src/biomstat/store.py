"""On-disk representation of embedding sequences and dataset manifests.

Embedding container (little-endian throughout):

    magic "BMSQ" | format version u32 (=1) | dim u32 | frame_count u32
    | frame_indices: frame_count x u32 | embeddings: frame_count x dim x f32,
    row-major

Manifests are JSON files named ``manifest.json`` with a ``version`` field and
a list of video records; labels are serialized as integers (0 = authentic,
1 = deepfake). Embedding paths are stored relative to the manifest's
directory.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .errors import DataFormatError, ValidationError

MAGIC = b"BMSQ"
FORMAT_VERSION = 1
MANIFEST_VERSION = 1
MANIFEST_FILENAME = "manifest.json"

# Looser than float32 epsilon to absorb extractor rounding, tight enough
# that cosine similarity via dot product stays within ~2e-4 of true cosine.
UNIT_NORM_TOL = 1e-4

_HEADER = struct.Struct("<4sIII")

LABEL_AUTHENTIC = 0
LABEL_DEEPFAKE = 1


@dataclass(frozen=True)
class EmbeddingSequence:
    """Ordered unit-norm face embeddings for one video.

    ``embeddings`` is a read-only (frame_count, dim) float32 array;
    ``frame_indices`` holds the original frame ordinals of the kept frames
    and is strictly increasing.
    """

    video_id: str
    embeddings: np.ndarray
    frame_indices: np.ndarray

    def __post_init__(self) -> None:
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        idx = np.ascontiguousarray(self.frame_indices, dtype=np.uint32)
        emb.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "frame_indices", idx)
        self._validate()

    @property
    def frame_count(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def _validate(self) -> None:
        if self.embeddings.ndim != 2:
            raise ValidationError(
                f"embeddings must be a 2-D array, got shape {self.embeddings.shape}"
            )
        n, dim = self.embeddings.shape
        if n < 1 or dim < 1:
            raise ValidationError(f"empty embedding sequence (shape {n} x {dim})")
        if self.frame_indices.shape != (n,):
            raise ValidationError(
                f"frame_indices length {self.frame_indices.shape[0]} != frame count {n}"
            )
        if n > 1 and not np.all(np.diff(self.frame_indices.astype(np.int64)) > 0):
            raise ValidationError("frame_indices must be strictly increasing")
        norms = np.linalg.norm(self.embeddings.astype(np.float64), axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]
        if bad.size:
            row = int(bad[0])
            raise ValidationError(
                f"row {row} norm {norms[row]:g} outside tolerance {UNIT_NORM_TOL:g}"
            )

    def truncated(self, max_frames: int | None) -> "EmbeddingSequence":
        """First ``max_frames`` frames (prefix), or self when not limiting."""
        if max_frames is None or max_frames >= self.frame_count:
            return self
        if max_frames < 1:
            raise ValidationError(f"max_frames must be >= 1, got {max_frames}")
        return EmbeddingSequence(
            video_id=self.video_id,
            embeddings=self.embeddings[:max_frames],
            frame_indices=self.frame_indices[:max_frames],
        )


def write_sequence(seq: EmbeddingSequence, destination: str | Path | BinaryIO) -> int:
    """Write ``seq`` in the binary container format; returns bytes written."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, seq.dim, seq.frame_count)
    idx_bytes = seq.frame_indices.astype("<u4").tobytes()
    emb_bytes = seq.embeddings.astype("<f4").tobytes()
    payload = header + idx_bytes + emb_bytes
    if hasattr(destination, "write"):
        destination.write(payload)  # type: ignore[union-attr]
    else:
        path = Path(destination)
        try:
            path.write_bytes(payload)
        except OSError as exc:
            raise DataFormatError(f"cannot write {path}: {exc}") from exc
    return len(payload)


def read_sequence(source: str | Path | BinaryIO, video_id: str | None = None) -> EmbeddingSequence:
    """Parse and validate a sequence from a file path or binary stream.

    ``video_id`` defaults to the file stem when reading from a path and to
    the empty string when reading from a stream.
    """
    if hasattr(source, "read"):
        data = source.read()  # type: ignore[union-attr]
        name = video_id if video_id is not None else ""
        origin = "<stream>"
    else:
        path = Path(source)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise DataFormatError(f"cannot read {path}: {exc}") from exc
        name = video_id if video_id is not None else path.stem
        origin = str(path)
    return _parse_sequence(data, name, origin)


def _parse_sequence(data: bytes, video_id: str, origin: str) -> EmbeddingSequence:
    if len(data) < _HEADER.size:
        raise DataFormatError(f"{origin}: truncated payload (no header)")
    magic, version, dim, frame_count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataFormatError(f"{origin}: unrecognized format (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{origin}: unsupported version {version}")
    if dim < 1 or frame_count < 1:
        raise DataFormatError(f"{origin}: invalid header (dim={dim}, frames={frame_count})")
    need = _HEADER.size + 4 * frame_count + 4 * frame_count * dim
    if len(data) < need:
        raise DataFormatError(
            f"{origin}: truncated payload ({len(data)} bytes, need {need})"
        )
    off = _HEADER.size
    idx = np.frombuffer(data, dtype="<u4", count=frame_count, offset=off)
    off += 4 * frame_count
    emb = np.frombuffer(data, dtype="<f4", count=frame_count * dim, offset=off)
    emb = emb.reshape(frame_count, dim)
    return EmbeddingSequence(video_id=video_id, embeddings=emb, frame_indices=idx)


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    identity_id: str
    label: int
    generator_tag: str
    embedding_path: str
    fps: float

    def __post_init__(self) -> None:
        if self.label not in (LABEL_AUTHENTIC, LABEL_DEEPFAKE):
            raise ValidationError(
                f'record "{self.video_id}": label {self.label} not in {{0, 1}}'
            )
        if not self.identity_id:
            raise ValidationError(f'record "{self.video_id}": empty identity_id')
        if not self.video_id:
            raise ValidationError("record with empty video_id")
        if not self.fps > 0:
            raise ValidationError(f'record "{self.video_id}": fps {self.fps} not positive')


@dataclass(frozen=True)
class DatasetManifest:
    """Video records plus the directory embedding paths resolve against."""

    version: int
    records: tuple[VideoRecord, ...]
    root: Path

    def __post_init__(self) -> None:
        seen: dict[str, int] = {}
        for rec in self.records:
            seen[rec.video_id] = seen.get(rec.video_id, 0) + 1
        dupes = sorted(vid for vid, cnt in seen.items() if cnt > 1)
        if dupes:
            raise ValidationError(f"duplicate video_id: {', '.join(dupes)}")

    def embedding_file(self, record: VideoRecord) -> Path:
        return self.root / record.embedding_path

    def identities(self) -> list[str]:
        return sorted({rec.identity_id for rec in self.records})


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    """Load and validate ``manifest.json``; paths resolve against its directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILENAME
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict) or "records" not in raw:
        raise DataFormatError(f"{path}: missing records field")
    version = raw.get("version")
    if version != MANIFEST_VERSION:
        raise DataFormatError(f"{path}: unsupported manifest version {version!r}")
    records = []
    for i, entry in enumerate(raw["records"]):
        try:
            records.append(
                VideoRecord(
                    video_id=str(entry["video_id"]),
                    identity_id=str(entry["identity_id"]),
                    label=int(entry["label"]),
                    generator_tag=str(entry.get("generator_tag", "unknown")),
                    embedding_path=str(entry["embedding_path"]),
                    fps=float(entry.get("fps", 30.0)),
                )
            )
        except KeyError as exc:
            raise DataFormatError(f"{path}: record {i} missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise DataFormatError(f"{path}: record {i} malformed ({exc})") from exc
    manifest = DatasetManifest(version=version, records=tuple(records), root=path.parent)
    if check_files:
        missing = [
            rec.embedding_path
            for rec in manifest.records
            if not manifest.embedding_file(rec).is_file()
        ]
        if missing:
            raise ValidationError(
                f"{path}: missing embedding files: {', '.join(sorted(missing))}"
            )
    return manifest


def save_manifest(records: Iterable[VideoRecord], directory: str | Path) -> Path:
    """Write ``manifest.json`` for ``records`` into ``directory``."""
    directory = Path(directory)
    payload = {
        "version": MANIFEST_VERSION,
        "records": [
            {
                "video_id": rec.video_id,
                "identity_id": rec.identity_id,
                "label": int(rec.label),
                "generator_tag": rec.generator_tag,
                "embedding_path": rec.embedding_path,
                "fps": rec.fps,
            }
            for rec in records
        ],
    }
    path = directory / MANIFEST_FILENAME
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def scan_dataset(manifest: DatasetManifest) -> dict:
    """Fully parse every embedding file; returns a summary dict.

    Raises the underlying error, prefixed with the offending video_id, on the
    first file that fails to parse or validate.
    """
    total_frames = 0
    dims = set()
    for rec in manifest.records:
        try:
            seq = read_sequence(manifest.embedding_file(rec), video_id=rec.video_id)
        except (DataFormatError, ValidationError) as exc:
            raise type(exc)(f'video "{rec.video_id}": {exc}') from exc
        total_frames += seq.frame_count
        dims.add(seq.dim)
    labels = [rec.label for rec in manifest.records]
    return {
        "videos": len(manifest.records),
        "identities": len(manifest.identities()),
        "authentic": labels.count(LABEL_AUTHENTIC),
        "deepfake": labels.count(LABEL_DEEPFAKE),
        "total_frames": total_frames,
        "dims": sorted(dims),
    }
