"""Deepfake video detection from temporal drift of facial biometric embeddings.

Pipeline: per-frame 512-D face embeddings -> all-pairs cosine similarities ->
9 summary statistics per video -> gradient-boosted-tree classifier, with a
grouped-by-identity evaluation harness and a synthetic data generator for
end-to-end verification.
"""

from .errors import (
    BiomstatError,
    DataFormatError,
    DegenerateDataError,
    InsufficientDataError,
    ValidationError,
)
from .evaluation import (
    ConfusionCounts,
    ExperimentSpec,
    FeatureTable,
    FoldPlan,
    MetricsReport,
    compute_metrics,
    feature_subset_study,
    featurize_manifest,
    group_k_fold,
    run_experiment,
    run_sweep,
)
from .features import FEATURE_NAMES, FeatureMask, FeatureVector, extract_features
from .gbt import (
    GbtModel,
    TrainConfig,
    TreeNode,
    deserialize,
    feature_importance,
    find_best_split,
    logistic_grad_hess,
    predict,
    predict_matrix,
    serialize,
    train,
)
from .similarity import (
    BinnedHistogram,
    SimilarityStats,
    cosine_similarity,
    pairwise_stats,
    quantile,
)
from .store import (
    DatasetManifest,
    EmbeddingSequence,
    VideoRecord,
    load_manifest,
    read_sequence,
    save_manifest,
    write_sequence,
)
from .synth import DeepfakeMix, SynthParams, generate_dataset, generate_video

__version__ = "0.1.0"

__all__ = [
    "BiomstatError",
    "BinnedHistogram",
    "ConfusionCounts",
    "DataFormatError",
    "DatasetManifest",
    "DeepfakeMix",
    "DegenerateDataError",
    "EmbeddingSequence",
    "ExperimentSpec",
    "FEATURE_NAMES",
    "FeatureMask",
    "FeatureTable",
    "FeatureVector",
    "FoldPlan",
    "GbtModel",
    "InsufficientDataError",
    "MetricsReport",
    "SimilarityStats",
    "SynthParams",
    "TrainConfig",
    "TreeNode",
    "ValidationError",
    "VideoRecord",
    "compute_metrics",
    "cosine_similarity",
    "deserialize",
    "extract_features",
    "feature_importance",
    "feature_subset_study",
    "featurize_manifest",
    "find_best_split",
    "generate_dataset",
    "generate_video",
    "group_k_fold",
    "load_manifest",
    "logistic_grad_hess",
    "pairwise_stats",
    "predict",
    "predict_matrix",
    "quantile",
    "read_sequence",
    "run_experiment",
    "run_sweep",
    "save_manifest",
    "serialize",
    "train",
    "write_sequence",
]
