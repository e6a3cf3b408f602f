"""Synthetic embedding sequences with controlled similarity distributions.

Authentic videos are a single tight cluster: a base unit vector plus
isotropic Gaussian noise, renormalized. Deepfake videos mix two clusters, the
second offset by a fixed angle, which makes the pairwise-similarity
distribution bimodal with a higher variance at a similar mean. Defaults are
calibrated so authentic similarity means sit near 0.9 with q25 above 0.8.

Per-video RNG streams are derived from (seed, video_id), so generation order
and parallelism never change the output.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .store import (
    LABEL_AUTHENTIC,
    LABEL_DEEPFAKE,
    DatasetManifest,
    EmbeddingSequence,
    VideoRecord,
    load_manifest,
    save_manifest,
    write_sequence,
)

# base-vector pairs of distinct identities must stay below this similarity
IDENTITY_SIMILARITY_CAP = 0.5

GENERATOR_TAG = "synthetic"


@dataclass(frozen=True)
class DeepfakeMix:
    """Two-cluster mixture: frames near the base with ``primary_weight``,
    otherwise near a direction offset by ``secondary_offset_angle`` radians."""

    primary_weight: float = 0.75
    primary_concentration: float = 3.0
    secondary_offset_angle: float = 0.58
    secondary_concentration: float = 3.0

    def __post_init__(self) -> None:
        if not 0.0 < self.primary_weight < 1.0:
            raise ValidationError(
                f"primary_weight must be in (0, 1), got {self.primary_weight}"
            )
        if self.primary_concentration <= 0 or self.secondary_concentration <= 0:
            raise ValidationError("concentrations must be positive")


@dataclass(frozen=True)
class SynthParams:
    """Concentration c maps to per-component noise scale 1/(c*sqrt(dim));
    the expected within-cluster similarity is then roughly 1/(1 + 1/c^2),
    about 0.9 at the default c = 3."""

    dim: int = 512
    n_frames: int = 2000
    authentic_concentration: float = 3.0
    deepfake_mix: DeepfakeMix = field(default_factory=DeepfakeMix)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ValidationError(f"dim must be >= 2, got {self.dim}")
        if self.n_frames < 1:
            raise ValidationError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.authentic_concentration <= 0:
            raise ValidationError("authentic_concentration must be positive")


def _video_rng(seed: int, video_id: str) -> np.random.Generator:
    digest = hashlib.sha256(video_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big")])


def _noise_scale(concentration: float, dim: int) -> float:
    return 1.0 / (concentration * math.sqrt(dim))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    return _unit(rng.standard_normal(dim))


def _offset_direction(
    rng: np.random.Generator, base: np.ndarray, angle: float
) -> np.ndarray:
    ortho = rng.standard_normal(base.shape[0])
    ortho -= (ortho @ base) * base
    ortho = _unit(ortho)
    return math.cos(angle) * base + math.sin(angle) * ortho


def _cluster_frames(
    rng: np.random.Generator, center: np.ndarray, count: int, scale: float
) -> np.ndarray:
    frames = center + scale * rng.standard_normal((count, center.shape[0]))
    return frames / np.linalg.norm(frames, axis=1, keepdims=True)


def _generate_frames(
    rng: np.random.Generator, base: np.ndarray, label: int, params: SynthParams
) -> np.ndarray:
    if label == LABEL_AUTHENTIC:
        scale = _noise_scale(params.authentic_concentration, params.dim)
        return _cluster_frames(rng, base, params.n_frames, scale)
    mix = params.deepfake_mix
    secondary = _offset_direction(rng, base, mix.secondary_offset_angle)
    choose_primary = rng.random(params.n_frames) < mix.primary_weight
    frames = np.empty((params.n_frames, params.dim), dtype=np.float64)
    n_primary = int(choose_primary.sum())
    frames[choose_primary] = _cluster_frames(
        rng, base, n_primary, _noise_scale(mix.primary_concentration, params.dim)
    )
    frames[~choose_primary] = _cluster_frames(
        rng,
        secondary,
        params.n_frames - n_primary,
        _noise_scale(mix.secondary_concentration, params.dim),
    )
    return frames


def generate_video(
    params: SynthParams,
    label: int,
    video_id: str = "synth-0000",
    base_direction: np.ndarray | None = None,
) -> EmbeddingSequence:
    """One synthetic video; deterministic in (params.rng_seed, video_id)."""
    if label not in (LABEL_AUTHENTIC, LABEL_DEEPFAKE):
        raise ValidationError(f"label must be 0 or 1, got {label}")
    rng = _video_rng(params.rng_seed, video_id)
    base = base_direction if base_direction is not None else _random_unit(rng, params.dim)
    frames = _generate_frames(rng, base, label, params)
    return EmbeddingSequence(
        video_id=video_id,
        embeddings=frames.astype(np.float32),
        frame_indices=np.arange(params.n_frames, dtype=np.uint32),
    )


def _identity_bases(
    rng: np.random.Generator, count: int, dim: int
) -> list[np.ndarray]:
    bases: list[np.ndarray] = []
    attempts = 0
    while len(bases) < count:
        cand = _random_unit(rng, dim)
        attempts += 1
        if attempts > 1000 * count:
            raise ValidationError(
                f"cannot place {count} identities below similarity {IDENTITY_SIMILARITY_CAP}"
            )
        if all(abs(float(cand @ b)) < IDENTITY_SIMILARITY_CAP for b in bases):
            bases.append(cand)
    return bases


def generate_dataset(
    out_dir: str | Path,
    n_identities: int,
    videos_per_identity: int,
    params: SynthParams = SynthParams(),
    rng_seed: int | None = None,
) -> DatasetManifest:
    """Write a complete dataset (embedding files + manifest) to ``out_dir``.

    Labels alternate within and across identities, so an even
    ``videos_per_identity`` yields an exactly balanced dataset. Identity base
    vectors are rejection-sampled to pairwise similarity < 0.5.
    """
    if n_identities < 1 or videos_per_identity < 1:
        raise ValidationError("need at least one identity and one video per identity")
    seed = params.rng_seed if rng_seed is None else rng_seed
    if seed != params.rng_seed:
        params = SynthParams(
            dim=params.dim,
            n_frames=params.n_frames,
            authentic_concentration=params.authentic_concentration,
            deepfake_mix=params.deepfake_mix,
            rng_seed=seed,
        )
    out_dir = Path(out_dir)
    emb_dir = out_dir / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)
    bases = _identity_bases(np.random.default_rng([seed, 0]), n_identities, params.dim)
    records = []
    for ii in range(n_identities):
        identity = f"id{ii:04d}"
        for vv in range(videos_per_identity):
            label = (ii + vv) % 2
            video_id = f"{identity}_v{vv}"
            seq = generate_video(params, label, video_id, base_direction=bases[ii])
            rel = f"embeddings/{video_id}.bmsq"
            write_sequence(seq, out_dir / rel)
            records.append(
                VideoRecord(
                    video_id=video_id,
                    identity_id=identity,
                    label=label,
                    generator_tag=GENERATOR_TAG,
                    embedding_path=rel,
                    fps=30.0,
                )
            )
    save_manifest(records, out_dir)
    return load_manifest(out_dir)
