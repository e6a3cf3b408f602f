"""Face-crop embedders producing unit-norm 512-D vectors."""

from __future__ import annotations

import cv2
import numpy as np

EMBED_DIM = 512
_PATCH_SIZE = 32
_PROJECTION_SEED = 0xB10B


class PatchEmbedder:
    """Deterministic stand-in embedder: a fixed random projection of the
    normalized grayscale face crop.

    Similar crops map to similar vectors and identical crops map to identical
    vectors, which is what the pipeline tests need. It is NOT a biometric
    model; use the ONNX embedder with real recognition weights for forensic
    work.
    """

    name = "patch"

    def __init__(self) -> None:
        rng = np.random.default_rng(_PROJECTION_SEED)
        self._projection = rng.standard_normal((_PATCH_SIZE * _PATCH_SIZE, EMBED_DIM))

    def embed(self, crop: np.ndarray) -> np.ndarray:
        gray = cv2.cvtColor(crop, cv2.COLOR_BGR2GRAY) if crop.ndim == 3 else crop
        patch = cv2.resize(gray, (_PATCH_SIZE, _PATCH_SIZE), interpolation=cv2.INTER_AREA)
        flat = patch.astype(np.float64).ravel() / 255.0
        flat -= flat.mean()
        vec = flat @ self._projection
        norm = np.linalg.norm(vec)
        if norm < 1e-9:  # featureless crop
            vec = np.zeros(EMBED_DIM)
            vec[0] = 1.0
            return vec.astype(np.float32)
        return (vec / norm).astype(np.float32)


class ArcFaceOnnxEmbedder:
    """Recognition embeddings from user-supplied ArcFace ONNX weights."""

    name = "arcface-onnx"

    def __init__(self, model_path: str) -> None:
        try:
            import onnxruntime
        except ImportError as exc:
            raise RuntimeError(
                "the arcface-onnx embedder needs onnxruntime "
                "(pip install faceextract[arcface]) and a weights file"
            ) from exc
        self._session = onnxruntime.InferenceSession(
            model_path, providers=["CPUExecutionProvider"]
        )
        self._input_name = self._session.get_inputs()[0].name

    def embed(self, crop: np.ndarray) -> np.ndarray:
        face = cv2.resize(crop, (112, 112), interpolation=cv2.INTER_AREA)
        blob = (face.astype(np.float32) - 127.5) / 128.0
        blob = blob.transpose(2, 0, 1)[np.newaxis]
        vec = self._session.run(None, {self._input_name: blob})[0].ravel()
        return (vec / np.linalg.norm(vec)).astype(np.float32)


def make_embedder(name: str, arcface_model: str | None = None):
    if name == PatchEmbedder.name:
        return PatchEmbedder()
    if name == ArcFaceOnnxEmbedder.name:
        if not arcface_model:
            raise ValueError("arcface-onnx embedder needs --arcface-model <weights.onnx>")
        return ArcFaceOnnxEmbedder(arcface_model)
    raise ValueError(f"unknown embedder {name!r}; available: patch, arcface-onnx")
