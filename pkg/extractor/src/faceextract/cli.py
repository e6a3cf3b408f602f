"""Command line for the extractor: one video or a directory batch."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .backends import make_backend
from .embed import make_embedder
from .pipeline import ExtractError, Thresholds, extract, extract_batch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract.py",
        description="Convert video into per-frame face-embedding files (.bmsq).",
    )
    parser.add_argument("input", type=Path, help="video file, or a directory with --batch")
    parser.add_argument("-o", "--output", type=Path, required=True,
                        help="output .bmsq file, or a dataset directory with --batch")
    parser.add_argument("--batch", action="store_true",
                        help="process every video under INPUT and emit a manifest.json")
    parser.add_argument("--meta", type=Path, default=None,
                        help="write the per-frame sidecar JSON here (single-video mode)")
    parser.add_argument("--pitch-max", type=float, default=25.0)
    parser.add_argument("--yaw-max", type=float, default=20.0)
    parser.add_argument("--roll-max", type=float, default=20.0)
    parser.add_argument("--occlusion-overlap", type=float, default=0.1,
                        help="face-box fraction covered by an occluder that discards a frame")
    parser.add_argument("--backend", default="fiducial")
    parser.add_argument("--embedder", default="patch", choices=["patch", "arcface-onnx"])
    parser.add_argument("--arcface-model", default=None,
                        help="ONNX weights for --embedder arcface-onnx (or ARCFACE_ONNX_MODEL)")
    parser.add_argument("--labels", type=Path, default=None,
                        help="batch mode: CSV video_id,identity_id,label[,generator_tag]")
    return parser


def _load_labels(path: Path) -> dict[str, dict]:
    out: dict[str, dict] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["video_id"]] = {
                "identity_id": row["identity_id"],
                "label": int(row["label"]),
                "generator_tag": row.get("generator_tag") or "unknown",
            }
    return out


def main(argv=None) -> int:
    import os

    args = build_parser().parse_args(argv)
    thresholds = Thresholds(
        pitch_max=args.pitch_max,
        yaw_max=args.yaw_max,
        roll_max=args.roll_max,
        occlusion_overlap=args.occlusion_overlap,
    )
    try:
        backend = make_backend(args.backend)
        arcface_model = args.arcface_model or os.environ.get("ARCFACE_ONNX_MODEL")
        embedder = make_embedder(args.embedder, arcface_model)
        if args.batch:
            labels = _load_labels(args.labels) if args.labels else None
            records, failures = extract_batch(
                args.input, args.output, thresholds, backend, embedder, labels
            )
            for video, error in failures:
                print(f"warning: skipped {video}: {error}", file=sys.stderr)
            print(f"wrote {len(records)} videos to {args.output}")
            return 0 if records else 2
        result = extract(
            args.input, args.output, thresholds, backend, embedder, args.meta
        )
        print(
            f"kept {result.kept_frames}/{result.total_frames} frames "
            f"-> {args.output}"
        )
        return 0
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
