"""Writer for the embedding-sequence container and its dataset manifest.

Independent implementation of the consumer's published format so conformance
is a genuine cross-implementation test. Layout, little-endian: magic "BMSQ",
format version u32 (= 1), dim u32, frame_count u32, frame_count x u32 frame
indices, frame_count x dim x f32 embeddings row-major.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

MAGIC = b"BMSQ"
FORMAT_VERSION = 1
MANIFEST_VERSION = 1


def write_bmsq(path: str | Path, embeddings: np.ndarray, frame_indices: Iterable[int]) -> int:
    """Atomic write (temp file + rename); returns bytes written."""
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    idx = np.ascontiguousarray(list(frame_indices), dtype="<u4")
    if emb.ndim != 2 or emb.shape[0] != idx.shape[0] or emb.shape[0] < 1:
        raise ValueError(f"bad shapes: embeddings {emb.shape}, indices {idx.shape}")
    n, dim = emb.shape
    payload = struct.pack("<4sIII", MAGIC, FORMAT_VERSION, dim, n)
    payload += idx.tobytes() + emb.tobytes()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
    return len(payload)


def write_manifest(records: Iterable[Mapping], directory: str | Path) -> Path:
    """manifest.json in the consumer's schema; label must be 0 or 1."""
    rows = []
    for rec in records:
        rows.append(
            {
                "video_id": str(rec["video_id"]),
                "identity_id": str(rec["identity_id"]),
                "label": int(rec["label"]),
                "generator_tag": str(rec.get("generator_tag", "unknown")),
                "embedding_path": str(rec["embedding_path"]),
                "fps": float(rec.get("fps", 30.0)),
            }
        )
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps({"version": MANIFEST_VERSION, "records": rows}, indent=2) + "\n")
    return path
