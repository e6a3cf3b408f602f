"""Command-line interface: the full pipeline behind one binary.

Exit codes: 0 success, 1 malformed input or bad flags, 2 insufficient or
degenerate data. Expected failures print one-line messages, never tracebacks.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import figures
from .errors import (
    BiomstatError,
    DataFormatError,
    DegenerateDataError,
    InsufficientDataError,
    ValidationError,
)
from .evaluation import (
    DECISION_THRESHOLD,
    ExperimentSpec,
    feature_subset_study,
    featurize_manifest,
    read_features_csv,
    render_experiment_table,
    render_subset_table,
    results_to_jsonl,
    run_experiment,
    run_sweep,
    train_on_table,
    write_features_csv,
)
from .features import FeatureMask, extract_features
from .gbt import TrainConfig, deserialize, predict, serialize
from .similarity import (
    DEFAULT_BIN_COUNT,
    MODE_EXACT,
    MODE_STREAMING,
    histogram_rows,
    pairwise_stats,
)
from .store import load_manifest, read_sequence, scan_dataset
from .synth import DeepfakeMix, SynthParams, generate_dataset
from .threads import resolve_threads

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_DEGENERATE = 2


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    grp = parser.add_argument_group("training")
    grp.add_argument("--trees", type=int, default=100, help="maximum boosting rounds")
    grp.add_argument("--learning-rate", type=float, default=0.1)
    grp.add_argument("--depth", type=int, default=6, help="maximum tree depth")
    grp.add_argument("--min-child-weight", type=float, default=1.0)
    grp.add_argument("--gamma", type=float, default=0.1, help="per-leaf complexity penalty")
    grp.add_argument("--reg-lambda", type=float, default=1.0, help="L2 on leaf weights")
    grp.add_argument("--subsample", type=float, default=0.8)
    grp.add_argument("--colsample", type=float, default=0.8)
    grp.add_argument("--patience", type=int, default=10, help="early stopping patience (0 off)")
    grp.add_argument("--base-score", type=float, default=0.5)


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        max_trees=args.trees,
        learning_rate=args.learning_rate,
        max_depth=args.depth,
        min_child_weight=args.min_child_weight,
        gamma=args.gamma,
        reg_lambda=args.reg_lambda,
        subsample=args.subsample,
        colsample=args.colsample,
        early_stopping_patience=args.patience,
        rng_seed=args.seed,
        base_score=args.base_score,
    )


def _parse_mask(raw: str | None) -> FeatureMask:
    if not raw:
        return FeatureMask.full()
    return FeatureMask(tuple(name.strip() for name in raw.split(",") if name.strip()))


def _parse_tags(raw: str) -> frozenset[str]:
    tags = frozenset(tag.strip() for tag in raw.split(",") if tag.strip())
    if not tags:
        raise ValidationError(f"empty tag selector {raw!r}")
    return tags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biomstat",
        description="Deepfake detection from the drift of per-frame face embeddings.",
    )
    parser.add_argument(
        "--config", type=Path, default=None, help="JSON file of flag defaults (flags win)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset directory (manifest + embeddings)")
    p.add_argument("directory", type=Path)

    p = sub.add_parser("featurize", help="write the per-video feature CSV for a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--mode", choices=[MODE_EXACT, MODE_STREAMING], default=MODE_EXACT)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("train", help="train a model from a feature CSV")
    p.add_argument("features", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)

    p = sub.add_parser("predict", help="classify one embedding file")
    p.add_argument("model", type=Path)
    p.add_argument("video", type=Path, help="embedding file (.bmsq)")
    p.add_argument("--mode", choices=[MODE_EXACT, MODE_STREAMING], default=MODE_EXACT)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--threshold", type=float, default=DECISION_THRESHOLD)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--json", action="store_true", dest="as_json")

    p = sub.add_parser("evaluate", help="train/eval experiment rows over a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--train-tag", default="synthetic", help="comma-separated generator tags")
    p.add_argument("--eval-tag", default="synthetic")
    p.add_argument("--sweep-frames", default=None, help="comma-separated length caps")
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--mode", choices=[MODE_EXACT, MODE_STREAMING], default=MODE_EXACT)
    p.add_argument("--features", default=None, help="comma-separated feature subset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--outdir", type=Path, default=None, help="write report files here")
    _add_train_flags(p)

    p = sub.add_parser("subsets", help="rank all 511 feature subsets by grouped-CV accuracy")
    p.add_argument("manifest", type=Path)
    p.add_argument("--mode", choices=[MODE_EXACT, MODE_STREAMING], default=MODE_EXACT)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("-o", "--outdir", type=Path, default=None)
    _add_train_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("outdir", type=Path)
    p.add_argument("--identities", type=int, default=50)
    p.add_argument("--videos-per-identity", type=int, default=2)
    p.add_argument("--frames", type=int, default=2000)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--authentic-concentration", type=float, default=3.0)
    p.add_argument("--primary-weight", type=float, default=0.75)
    p.add_argument("--primary-concentration", type=float, default=3.0)
    p.add_argument("--secondary-offset-angle", type=float, default=0.58)
    p.add_argument("--secondary-concentration", type=float, default=3.0)

    p = sub.add_parser("hist", help="pairwise-similarity histogram of one embedding file")
    p.add_argument("video", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True, help="CSV path")
    p.add_argument("--bins", type=int, default=DEFAULT_BIN_COUNT)
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-figure", action="store_true", help="skip the PNG next to the CSV")

    return parser


def _cmd_ingest(args) -> int:
    manifest = load_manifest(args.directory)
    summary = scan_dataset(manifest)
    print(
        f"ok: {summary['videos']} videos, {summary['identities']} identities, "
        f"{summary['authentic']} authentic / {summary['deepfake']} deepfake, "
        f"{summary['total_frames']} frames, dims {summary['dims']}"
    )
    return EXIT_OK


def _cmd_featurize(args) -> int:
    manifest = load_manifest(args.manifest)
    table = featurize_manifest(
        manifest,
        mode=args.mode,
        max_frames=args.max_frames,
        threads=resolve_threads(args.threads),
    )
    write_features_csv(table, args.output)
    print(f"wrote {table.n_videos} rows to {args.output}")
    return EXIT_OK


def _cmd_train(args) -> int:
    table = read_features_csv(args.features)
    config = _config_from_args(args)
    result = train_on_table(table, config, split_seed=args.seed)
    args.output.write_bytes(serialize(result.model))
    best = result.model.best_round
    last_val = result.valid_logloss[best] if result.valid_logloss else None
    msg = (
        f"trained {result.model.trained_rounds} rounds, kept {best + 1} "
        f"(train logloss {result.train_logloss[best]:.4f}"
    )
    if last_val is not None:
        msg += f", validation logloss {last_val:.4f}"
    print(msg + f"), model written to {args.output}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    model = deserialize(args.model.read_bytes())
    seq = read_sequence(args.video)
    stats = pairwise_stats(
        seq,
        mode=args.mode,
        max_frames=args.max_frames,
        threads=resolve_threads(args.threads),
    )
    vec = extract_features(stats)
    mask = FeatureMask(model.feature_names)
    probability, raw = predict(model, mask.select(vec.values.reshape(1, -1))[0])
    label = "deepfake" if probability >= args.threshold else "authentic"
    n_used = seq.truncated(args.max_frames).frame_count
    if not model.trees:
        print("warning: non-discriminative model (no trees); output is the base score",
              file=sys.stderr)
    if args.as_json:
        print(
            json.dumps(
                {
                    "schema_version": 1,
                    "video_id": seq.video_id,
                    "probability": probability,
                    "raw_score": raw,
                    "label": label,
                    "threshold": args.threshold,
                    "frames_used": n_used,
                    "mode": args.mode,
                },
                sort_keys=True,
            )
        )
    else:
        print(
            f"{seq.video_id}: {label} (probability {probability:.4f}, "
            f"N={n_used}, mode={args.mode})"
        )
    return EXIT_OK


def _build_spec(args) -> ExperimentSpec:
    return ExperimentSpec(
        train_tags=_parse_tags(args.train_tag),
        eval_tags=_parse_tags(args.eval_tag),
        max_frames=args.max_frames,
        mode=args.mode,
        feature_mask=_parse_mask(args.features),
        config=_config_from_args(args),
        rng_seed=args.seed,
    )


def _cmd_evaluate(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = _build_spec(args)
    threads = resolve_threads(args.threads)
    if args.sweep_frames:
        frames = [int(v) for v in args.sweep_frames.split(",") if v.strip()]
        results = run_sweep(manifest, spec, frames, threads=threads)
    else:
        results = [run_experiment(manifest, spec, threads=threads)]
    table_text = render_experiment_table(results)
    print(table_text, end="")
    if args.outdir:
        args.outdir.mkdir(parents=True, exist_ok=True)
        (args.outdir / "report.txt").write_text(table_text)
        (args.outdir / "report.jsonl").write_text(results_to_jsonl(results))
        figures.save_metrics_figure(results, args.outdir / "metrics.png")
        if len(results) > 1:
            figures.save_sweep_figure(results, args.outdir / "accuracy_vs_frames.png")
        print(f"report files written to {args.outdir}")
    return EXIT_OK


def _cmd_subsets(args) -> int:
    manifest = load_manifest(args.manifest)
    threads = resolve_threads(args.threads)
    table = featurize_manifest(
        manifest, mode=args.mode, max_frames=args.max_frames, threads=threads
    )
    config = _config_from_args(args)
    ranked = feature_subset_study(
        table, config=config, k=args.k, rng_seed=args.seed, workers=threads
    )
    table_text = render_subset_table(ranked)
    print(table_text, end="")
    if args.outdir:
        args.outdir.mkdir(parents=True, exist_ok=True)
        (args.outdir / "subsets.txt").write_text(table_text)
        (args.outdir / "subsets.jsonl").write_text(results_to_jsonl(ranked))
        figures.save_subset_figure(ranked, args.outdir / "subset_accuracy.png")
        print(f"report files written to {args.outdir}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    params = SynthParams(
        dim=args.dim,
        n_frames=args.frames,
        authentic_concentration=args.authentic_concentration,
        deepfake_mix=DeepfakeMix(
            primary_weight=args.primary_weight,
            primary_concentration=args.primary_concentration,
            secondary_offset_angle=args.secondary_offset_angle,
            secondary_concentration=args.secondary_concentration,
        ),
        rng_seed=args.seed,
    )
    manifest = generate_dataset(
        args.outdir, args.identities, args.videos_per_identity, params
    )
    print(
        f"wrote {len(manifest.records)} videos "
        f"({args.identities} identities) to {args.outdir}"
    )
    return EXIT_OK


def _cmd_hist(args) -> int:
    seq = read_sequence(args.video)
    stats = pairwise_stats(
        seq,
        mode=MODE_STREAMING,
        max_frames=args.max_frames,
        threads=resolve_threads(args.threads),
        bin_count=args.bins,
    )
    rows = histogram_rows(stats.histogram)
    with open(args.output, "w") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for lo, hi, count in rows:
            fh.write(f"{lo:.10g},{hi:.10g},{count}\n")
    print(f"wrote {len(rows)} bins ({stats.pair_count} pairs) to {args.output}")
    if not args.no_figure:
        png = args.output.with_suffix(".png")
        figures.save_histogram_figure(stats.histogram, png, title=seq.video_id)
        print(f"figure written to {png}")
    return EXIT_OK


_COMMANDS = {
    "ingest": _cmd_ingest,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "subsets": _cmd_subsets,
    "synth": _cmd_synth,
    "hist": _cmd_hist,
}


def _known_dests(parser: argparse.ArgumentParser) -> set[str]:
    dests = {a.dest for a in parser._actions}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                dests |= {a.dest for a in sub._actions}
    dests.discard("help")
    return dests


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Merge a --config JSON file as flag defaults; explicit flags win.

    Defaults are pushed onto every subparser: set_defaults rewrites the
    matching action defaults, which explicit command-line values override.
    """
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", type=Path, default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config is None:
        return
    try:
        defaults = json.loads(known.config.read_text())
    except OSError as exc:
        raise DataFormatError(f"cannot read config {known.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{known.config}: not valid JSON ({exc})") from exc
    if not isinstance(defaults, dict):
        raise DataFormatError(f"{known.config}: config must be a JSON object")
    unknown = sorted(set(defaults) - _known_dests(parser))
    if unknown:
        raise DataFormatError(
            f"{known.config}: unknown config keys: {', '.join(unknown)}"
        )
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                sub_dests = {a.dest for a in sub._actions}
                sub.set_defaults(**{k: v for k, v in defaults.items() if k in sub_dests})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (InsufficientDataError, DegenerateDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataFormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except BiomstatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
