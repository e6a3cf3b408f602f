"""Grouped cross-validation, metrics, experiments, and the feature-subset study.

All train/evaluation partitions are grouped by identity: no identity ever
appears on both sides of a split. Experiment rows report balanced accuracy
(mean of the true-positive and true-negative rates) in tables; plain accuracy
is additionally carried in the JSON output.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DegenerateDataError, DataFormatError, ValidationError
from .features import FEATURE_NAMES, FeatureMask, extract_features
from .gbt import GbtModel, TrainConfig, predict_matrix, train
from .similarity import MODE_EXACT, MODE_STREAMING, pairwise_stats
from .store import DatasetManifest, VideoRecord, read_sequence

REPORT_SCHEMA_VERSION = 1
DECISION_THRESHOLD = 0.5

# identity fractions held out for evaluation and for early stopping
EVAL_IDENTITY_FRACTION = 0.2
VALIDATION_IDENTITY_FRACTION = 0.2


@dataclass(frozen=True)
class ConfusionCounts:
    """Positive class is deepfake."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float  # balanced: mean of TPR and TNR
    plain_accuracy: float
    precision: float
    recall: float
    f1: float
    weighted_f1: float
    support_authentic: int
    support_deepfake: int


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(counts: ConfusionCounts) -> MetricsReport:
    """Metrics from confusion counts; zero-denominator components are 0."""
    if counts.total == 0:
        raise DegenerateDataError("no evaluated videos")
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    tnr = _ratio(tn, tn + fp)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    precision0 = _ratio(tn, tn + fn)
    f1_authentic = _ratio(2.0 * precision0 * tnr, precision0 + tnr)
    n_deepfake = tp + fn
    n_authentic = tn + fp
    return MetricsReport(
        accuracy=0.5 * (recall + tnr),
        plain_accuracy=(tp + tn) / counts.total,
        precision=precision,
        recall=recall,
        f1=f1,
        weighted_f1=(n_deepfake * f1 + n_authentic * f1_authentic) / counts.total,
        support_authentic=n_authentic,
        support_deepfake=n_deepfake,
    )


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict[str, int]  # video_id -> fold

    def fold_videos(self, fold: int) -> list[str]:
        return sorted(v for v, f in self.assignments.items() if f == fold)


def _deal_identities(
    counts_by_identity: dict[str, int], k: int, rng_seed: int | list[int]
) -> dict[str, int]:
    """Shuffle identities, then deal round-robin in descending video count."""
    identities = sorted(counts_by_identity)
    if len(identities) < k:
        raise DegenerateDataError(
            f"need at least {k} identities for {k} folds, got {len(identities)}"
        )
    rng = np.random.default_rng(rng_seed)
    shuffled = [identities[i] for i in rng.permutation(len(identities))]
    shuffled.sort(key=lambda ident: -counts_by_identity[ident])  # stable
    return {ident: pos % k for pos, ident in enumerate(shuffled)}


def group_k_fold(manifest: DatasetManifest, k: int = 5, rng_seed: int = 0) -> FoldPlan:
    """Fold plan keeping every identity's videos in a single fold."""
    counts: dict[str, int] = {}
    for rec in manifest.records:
        counts[rec.identity_id] = counts.get(rec.identity_id, 0) + 1
    fold_of_identity = _deal_identities(counts, k, rng_seed)
    return FoldPlan(
        k=k,
        assignments={rec.video_id: fold_of_identity[rec.identity_id] for rec in manifest.records},
    )


@dataclass(frozen=True)
class FeatureTable:
    """Featurized dataset: one row per video, columns in FEATURE_NAMES order."""

    video_ids: tuple[str, ...]
    identities: tuple[str, ...]
    labels: np.ndarray
    matrix: np.ndarray

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        n = len(self.video_ids)
        if len(self.identities) != n or labels.shape != (n,) or matrix.shape != (n, len(FEATURE_NAMES)):
            raise ValidationError("feature table fields have inconsistent shapes")
        labels.setflags(write=False)
        matrix.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_videos(self) -> int:
        return len(self.video_ids)

    def rows(self, indices: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        idx = list(indices)
        return self.matrix[idx], self.labels[idx]


def featurize_records(
    manifest: DatasetManifest,
    records: Sequence[VideoRecord],
    mode: str = MODE_EXACT,
    max_frames: int | None = None,
    threads: int = 1,
) -> FeatureTable:
    """Features for ``records``, in the given order. Parallel across videos."""

    def one(rec: VideoRecord) -> np.ndarray:
        seq = read_sequence(manifest.embedding_file(rec), video_id=rec.video_id)
        stats = pairwise_stats(
            seq, mode=mode, max_frames=max_frames, threads=1, limit_blas=False
        )
        return extract_features(stats).values

    with threadpool_limits(limits=1):
        if threads > 1 and len(records) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                vectors = list(pool.map(one, records))
        else:
            vectors = [one(rec) for rec in records]
    return FeatureTable(
        video_ids=tuple(rec.video_id for rec in records),
        identities=tuple(rec.identity_id for rec in records),
        labels=np.array([rec.label for rec in records], dtype=np.int64),
        matrix=np.vstack(vectors) if vectors else np.empty((0, len(FEATURE_NAMES))),
    )


def featurize_manifest(
    manifest: DatasetManifest,
    mode: str = MODE_EXACT,
    max_frames: int | None = None,
    threads: int = 1,
) -> FeatureTable:
    return featurize_records(manifest, manifest.records, mode, max_frames, threads)


FEATURES_CSV_HEADER = ("video_id", "identity_id", "label") + FEATURE_NAMES


def write_features_csv(table: FeatureTable, path: str | Path) -> None:
    """One row per video; floats printed with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURES_CSV_HEADER)
        for i in range(table.n_videos):
            writer.writerow(
                [table.video_ids[i], table.identities[i], int(table.labels[i])]
                + [format(v, ".17g") for v in table.matrix[i]]
            )


def read_features_csv(path: str | Path) -> FeatureTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise DataFormatError(f"{path}: empty features file") from None
        if header != FEATURES_CSV_HEADER:
            raise DataFormatError(f"{path}: unexpected header {header!r}")
        video_ids, identities, labels, rows = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(FEATURES_CSV_HEADER):
                raise DataFormatError(f"{path}:{lineno}: wrong column count")
            video_ids.append(row[0])
            identities.append(row[1])
            labels.append(int(row[2]))
            rows.append([float(v) for v in row[3:]])
    return FeatureTable(
        video_ids=tuple(video_ids),
        identities=tuple(identities),
        labels=np.array(labels, dtype=np.int64),
        matrix=np.array(rows, dtype=np.float64),
    )


@dataclass(frozen=True)
class ExperimentSpec:
    """One train/eval cell: tag selectors, truncation, mode, mask, config."""

    train_tags: frozenset[str]
    eval_tags: frozenset[str]
    max_frames: int | None = None
    mode: str = MODE_EXACT
    feature_mask: FeatureMask = FeatureMask.full()
    config: TrainConfig = TrainConfig()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.train_tags or not self.eval_tags:
            raise ValidationError("train and eval selectors must name at least one tag")
        if self.mode not in (MODE_EXACT, MODE_STREAMING):
            raise ValidationError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    model: GbtModel
    counts: ConfusionCounts
    metrics: MetricsReport
    n_train_identities: int
    n_eval_identities: int
    n_train_videos: int
    n_eval_videos: int

    def to_json_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "train_model": ",".join(sorted(self.spec.train_tags)),
            "eval_model": ",".join(sorted(self.spec.eval_tags)),
            "max_frames": self.spec.max_frames,
            "mode": self.spec.mode,
            "features": list(self.spec.feature_mask.included),
            "seed": self.spec.rng_seed,
            "train_size": self.n_train_identities,
            "eval_size": self.n_eval_identities,
            "train_videos": self.n_train_videos,
            "eval_videos": self.n_eval_videos,
            "confusion": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "tn": self.counts.tn,
                "fn": self.counts.fn,
            },
            "accuracy": self.metrics.accuracy,
            "plain_accuracy": self.metrics.plain_accuracy,
            "precision": self.metrics.precision,
            "recall": self.metrics.recall,
            "f1": self.metrics.f1,
            "weighted_f1": self.metrics.weighted_f1,
        }


def _split_fraction(
    items: list[str], fraction: float, rng_seed: int | list[int]
) -> tuple[list[str], list[str]]:
    """(held_out, rest); held-out size is ceil(fraction * n), at least 1."""
    if not items:
        return [], []
    rng = np.random.default_rng(rng_seed)
    order = [items[i] for i in rng.permutation(len(items))]
    n_held = max(1, int(np.ceil(fraction * len(items))))
    return sorted(order[:n_held]), sorted(order[n_held:])


def _select(manifest: DatasetManifest, tags: frozenset[str]) -> list[VideoRecord]:
    return [rec for rec in manifest.records if rec.generator_tag in tags]


def _require_both_classes(records: Sequence[VideoRecord], what: str) -> None:
    labels = {rec.label for rec in records}
    if labels != {0, 1}:
        raise DegenerateDataError(
            f"degenerate labels: {what} selects "
            f"{len(records)} videos with labels {sorted(labels)}"
        )


def _train_on_records(
    manifest: DatasetManifest,
    train_records: list[VideoRecord],
    spec: ExperimentSpec,
    threads: int,
    split_seed: int,
):
    """Grouped early-stop holdout, featurize, train. Returns (model, names)."""
    train_ids = sorted({rec.identity_id for rec in train_records})
    if spec.config.early_stopping_patience > 0:
        if len(train_ids) < 2:
            raise DegenerateDataError(
                "degenerate labels: need at least 2 training identities for the "
                "early-stopping holdout"
            )
        val_ids, fit_ids = _split_fraction(
            train_ids, VALIDATION_IDENTITY_FRACTION, split_seed
        )
        fit_records = [r for r in train_records if r.identity_id in set(fit_ids)]
        val_records = [r for r in train_records if r.identity_id in set(val_ids)]
        _require_both_classes(fit_records, "training partition")
        table_fit = featurize_records(manifest, fit_records, spec.mode, spec.max_frames, threads)
        table_val = featurize_records(manifest, val_records, spec.mode, spec.max_frames, threads)
        validation = (
            spec.feature_mask.select(table_val.matrix),
            table_val.labels.astype(np.float64),
        )
    else:
        fit_records = train_records
        _require_both_classes(fit_records, "training partition")
        table_fit = featurize_records(manifest, fit_records, spec.mode, spec.max_frames, threads)
        validation = None
    result = train(
        spec.feature_mask.select(table_fit.matrix),
        table_fit.labels.astype(np.float64),
        validation=validation,
        config=spec.config,
        feature_names=spec.feature_mask.included,
    )
    return result.model


def train_on_table(table: FeatureTable, config: TrainConfig, split_seed: int = 0):
    """Train on a feature table with a grouped early-stopping holdout.

    Holds out VALIDATION_IDENTITY_FRACTION of the identities (seeded) when
    early stopping is enabled; trains on everything otherwise. Returns the
    TrainResult from gbt.train.
    """
    identities = sorted(set(table.identities))
    if config.early_stopping_patience > 0:
        if len(identities) < 2:
            raise DegenerateDataError(
                "need at least 2 identities for the early-stopping holdout "
                "(or disable early stopping)"
            )
        val_ids, _ = _split_fraction(
            identities, VALIDATION_IDENTITY_FRACTION, _derived_seed(split_seed, 102)
        )
        val_set = set(val_ids)
        fit_idx = [i for i in range(table.n_videos) if table.identities[i] not in val_set]
        val_idx = [i for i in range(table.n_videos) if table.identities[i] in val_set]
        x_fit, y_fit = table.rows(fit_idx)
        x_val, y_val = table.rows(val_idx)
        validation = (x_val, y_val.astype(np.float64))
    else:
        x_fit, y_fit = table.rows(range(table.n_videos))
        validation = None
    if np.unique(y_fit).size < 2:
        raise DegenerateDataError("degenerate labels: training partition has a single class")
    return train(x_fit, y_fit.astype(np.float64), validation=validation, config=config)


def confusion_from_predictions(labels: np.ndarray, probs: np.ndarray) -> ConfusionCounts:
    predicted = probs >= DECISION_THRESHOLD
    actual = labels.astype(bool)
    return ConfusionCounts(
        tp=int(np.sum(predicted & actual)),
        fp=int(np.sum(predicted & ~actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )


def run_experiment(
    manifest: DatasetManifest,
    spec: ExperimentSpec,
    threads: int = 1,
    identity_split: tuple[Iterable[str], Iterable[str]] | None = None,
) -> ExperimentResult:
    """Train on train-tag videos, evaluate on eval-tag videos of held-out
    identities.

    By default a seeded 20% of the identities present in the eval selection is
    reserved for evaluation and everything else trains. ``identity_split``
    overrides that with explicit (train_identities, eval_identities); overlap
    is rejected as identity leakage.
    """
    train_pool = _select(manifest, spec.train_tags)
    eval_pool = _select(manifest, spec.eval_tags)
    _require_both_classes(train_pool, f"train selector {sorted(spec.train_tags)}")
    _require_both_classes(eval_pool, f"eval selector {sorted(spec.eval_tags)}")

    if identity_split is None:
        eval_id_pool = sorted({rec.identity_id for rec in eval_pool})
        eval_ids, _ = _split_fraction(
            eval_id_pool, EVAL_IDENTITY_FRACTION, _derived_seed(spec.rng_seed, 101)
        )
        eval_id_set = set(eval_ids)
        train_id_set = {rec.identity_id for rec in train_pool} - eval_id_set
    else:
        train_id_set = set(identity_split[0])
        eval_id_set = set(identity_split[1])
    overlap = sorted(train_id_set & eval_id_set)
    if overlap:
        raise DegenerateDataError(f"identity leakage: {', '.join(overlap)}")

    train_records = [r for r in train_pool if r.identity_id in train_id_set]
    eval_records = [r for r in eval_pool if r.identity_id in eval_id_set]
    if not train_records or not eval_records:
        raise DegenerateDataError("degenerate labels: empty train or eval partition")
    _require_both_classes(train_records, "training partition")

    model = _train_on_records(
        manifest, train_records, spec, threads, split_seed=_derived_seed(spec.rng_seed, 102)
    )
    table_eval = featurize_records(manifest, eval_records, spec.mode, spec.max_frames, threads)
    probs, _ = predict_matrix(model, spec.feature_mask.select(table_eval.matrix))
    counts = confusion_from_predictions(table_eval.labels, probs)
    return ExperimentResult(
        spec=spec,
        model=model,
        counts=counts,
        metrics=compute_metrics(counts),
        n_train_identities=len({r.identity_id for r in train_records}),
        n_eval_identities=len({r.identity_id for r in eval_records}),
        n_train_videos=len(train_records),
        n_eval_videos=len(eval_records),
    )


def _derived_seed(seed: int, stream: int) -> list[int]:
    # numpy seed sequences accept int lists; (seed, stream) pairs give
    # independent deterministic streams per pipeline stage
    return [seed, stream]


def run_sweep(
    manifest: DatasetManifest,
    spec: ExperimentSpec,
    frame_counts: Sequence[int | None],
    threads: int = 1,
) -> list[ExperimentResult]:
    """One experiment per video-length cap, same seed and selectors."""
    return [
        run_experiment(manifest, replace(spec, max_frames=mf), threads=threads)
        for mf in frame_counts
    ]


@dataclass(frozen=True)
class SubsetResult:
    rank: int
    mask_bits: int
    features: tuple[str, ...]
    accuracy: float

    @property
    def n_features(self) -> int:
        return len(self.features)

    def to_json_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "rank": self.rank,
            "mask_bits": self.mask_bits,
            "n_features": self.n_features,
            "features": list(self.features),
            "accuracy": self.accuracy,
        }


def cross_validated_counts(
    table: FeatureTable,
    mask: FeatureMask,
    config: TrainConfig,
    k: int = 5,
    rng_seed: int = 0,
) -> ConfusionCounts:
    """Pooled confusion over grouped k-fold CV of the feature table."""
    counts_by_identity: dict[str, int] = {}
    for ident in table.identities:
        counts_by_identity[ident] = counts_by_identity.get(ident, 0) + 1
    fold_of_identity = _deal_identities(counts_by_identity, k, rng_seed)
    folds = np.array([fold_of_identity[i] for i in table.identities])
    pooled = ConfusionCounts(0, 0, 0, 0)
    for fold in range(k):
        test_idx = np.nonzero(folds == fold)[0]
        train_idx = np.nonzero(folds != fold)[0]
        train_ids = sorted({table.identities[i] for i in train_idx})
        val_ids, fit_ids = _split_fraction(
            train_ids, VALIDATION_IDENTITY_FRACTION, _derived_seed(rng_seed, 201 + fold)
        )
        val_set = set(val_ids)
        fit_idx = [i for i in train_idx if table.identities[i] not in val_set]
        val_idx = [i for i in train_idx if table.identities[i] in val_set]
        x_fit, y_fit = table.rows(fit_idx)
        x_val, y_val = table.rows(val_idx)
        if np.unique(y_fit).size < 2:
            raise DegenerateDataError(f"degenerate labels in fold {fold} training partition")
        result = train(
            mask.select(x_fit),
            y_fit.astype(np.float64),
            validation=(mask.select(x_val), y_val.astype(np.float64))
            if config.early_stopping_patience > 0
            else None,
            config=config,
            feature_names=mask.included,
        )
        x_test, y_test = table.rows(list(test_idx))
        probs, _ = predict_matrix(result.model, mask.select(x_test))
        pooled = pooled + confusion_from_predictions(y_test, probs)
    return pooled


def _study_cell(args) -> tuple[int, float]:
    table, config, k, rng_seed, bits = args
    mask = FeatureMask.from_bits(bits)
    counts = cross_validated_counts(table, mask, config, k, rng_seed)
    return bits, compute_metrics(counts).accuracy


def feature_subset_study(
    table: FeatureTable,
    config: TrainConfig = TrainConfig(),
    k: int = 5,
    rng_seed: int = 0,
    workers: int = 1,
) -> list[SubsetResult]:
    """Grouped-CV accuracy for all 511 non-empty feature subsets, ranked.

    Descending accuracy; exact ties rank larger subsets first, then by mask
    bits, so degenerate ties resolve deterministically.
    """
    all_bits = list(range(1, 2 ** len(FEATURE_NAMES)))
    jobs = [(table, config, k, rng_seed, bits) for bits in all_bits]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_study_cell, jobs, chunksize=16))
    else:
        cells = [_study_cell(job) for job in jobs]
    by_bits = dict(cells)
    masks = {bits: FeatureMask.from_bits(bits) for bits in all_bits}
    order = sorted(
        all_bits,
        key=lambda b: (-by_bits[b], -len(masks[b].included), b),
    )
    return [
        SubsetResult(
            rank=pos + 1,
            mask_bits=bits,
            features=masks[bits].included,
            accuracy=by_bits[bits],
        )
        for pos, bits in enumerate(order)
    ]


def grid_search(
    table: FeatureTable,
    grid: Sequence[TrainConfig] = (TrainConfig(),),
    mask: FeatureMask = FeatureMask.full(),
    k: int = 5,
    rng_seed: int = 0,
) -> tuple[TrainConfig, list[tuple[TrainConfig, float]]]:
    """Pick the config with the best grouped-CV weighted F1. The default grid
    is the single stated-hyperparameter point."""
    scored = []
    for cfg in grid:
        counts = cross_validated_counts(table, mask, cfg, k, rng_seed)
        scored.append((cfg, compute_metrics(counts).weighted_f1))
    best = max(range(len(scored)), key=lambda i: scored[i][1])
    return scored[best][0], scored


_TABLE_COLUMNS = (
    ("Frames", 8),
    ("Train Model", 22),
    ("Eval Model", 22),
    ("Train", 6),
    ("Eval", 5),
    ("Acc", 6),
    ("Prec", 6),
    ("Recall", 6),
    ("F1", 6),
)


def render_experiment_table(results: Sequence[ExperimentResult]) -> str:
    """Aligned text table, metrics as percentages with one decimal."""
    lines = []
    header = "  ".join(name.ljust(width) for name, width in _TABLE_COLUMNS)
    lines.append(header)
    lines.append("-" * len(header))
    for res in results:
        m = res.metrics
        cells = (
            str(res.spec.max_frames or "all"),
            ",".join(sorted(res.spec.train_tags)),
            ",".join(sorted(res.spec.eval_tags)),
            str(res.n_train_identities),
            str(res.n_eval_identities),
            f"{100 * m.accuracy:.1f}",
            f"{100 * m.precision:.1f}",
            f"{100 * m.recall:.1f}",
            f"{100 * m.f1:.1f}",
        )
        lines.append(
            "  ".join(cell.ljust(width) for cell, (_, width) in zip(cells, _TABLE_COLUMNS))
        )
    return "\n".join(lines) + "\n"


def render_subset_table(results: Sequence[SubsetResult], head: int = 10, tail: int = 10) -> str:
    """Top and bottom slices of the subset ranking."""
    lines = ["Rank  Acc(%)  #Feat  Features"]
    lines.append("-" * 72)

    def row(res: SubsetResult) -> str:
        return (
            f"{res.rank:<5d} {100 * res.accuracy:<7.1f} {res.n_features:<6d} "
            + ", ".join(res.features)
        )

    for res in results[:head]:
        lines.append(row(res))
    if len(results) > head + tail:
        lines.append("...")
    for res in results[-tail:]:
        lines.append(row(res))
    return "\n".join(lines) + "\n"


def results_to_jsonl(results: Sequence[ExperimentResult | SubsetResult]) -> str:
    return "".join(json.dumps(res.to_json_dict(), sort_keys=True) + "\n" for res in results)
