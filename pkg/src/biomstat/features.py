"""The 9-entry statistical descriptor of a pair-similarity distribution.

Conventions, frozen for model compatibility: population moments; skewness
m3/m2^1.5; kurtosis m4/m2^2 (Pearson, no -3 excess correction); quantiles
by linear interpolation at rank q*(n-1). Central moments m2..m4 are expanded
from the raw power sums. Degenerate inputs (zero variance and/or zero mean)
map every ratio that would divide by zero to 0 instead of erroring, so the
pipeline stays total on adversarially constant inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .similarity import SimilarityStats, quantile

FEATURE_NAMES = (
    "mean",
    "median",
    "variance",
    "skewness",
    "kurtosis",
    "q25",
    "q75",
    "var_mean_ratio",
    "kurt_var_ratio",
)

DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class FeatureVector:
    """9 float64 entries in FEATURE_NAMES order; always finite."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.shape != (len(FEATURE_NAMES),):
            raise ValidationError(f"expected {len(FEATURE_NAMES)} entries, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("feature vector contains NaN or Inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(FEATURE_NAMES, self.values)}


@dataclass(frozen=True)
class FeatureMask:
    """Non-empty subset of the canonical feature names, in canonical order."""

    included: tuple[str, ...]

    def __post_init__(self) -> None:
        unknown = [n for n in self.included if n not in FEATURE_NAMES]
        if unknown:
            raise ValidationError(f"unknown feature names: {', '.join(unknown)}")
        if not self.included:
            raise ValidationError("feature mask is empty")
        ordered = tuple(n for n in FEATURE_NAMES if n in set(self.included))
        object.__setattr__(self, "included", ordered)

    @classmethod
    def full(cls) -> "FeatureMask":
        return cls(FEATURE_NAMES)

    @classmethod
    def from_bits(cls, bits: int) -> "FeatureMask":
        """Mask from a 9-bit integer, bit i selecting FEATURE_NAMES[i]."""
        if not 1 <= bits < 2 ** len(FEATURE_NAMES):
            raise ValidationError(f"mask bits out of range: {bits}")
        return cls(tuple(n for i, n in enumerate(FEATURE_NAMES) if bits >> i & 1))

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(FEATURE_NAMES.index(n) for n in self.included)

    def select(self, matrix: np.ndarray) -> np.ndarray:
        return matrix[:, list(self.indices)]


def extract_features(stats: SimilarityStats) -> FeatureVector:
    """Reduce SimilarityStats to the fixed 9D descriptor."""
    n = stats.pair_count
    if n < 3:
        raise InsufficientDataError(f"insufficient pairs ({n}, need at least 3)")
    mean = stats.s1 / n
    m2 = max(stats.s2 / n - mean * mean, 0.0)
    if m2 < DEGENERATE_EPS:
        variance = 0.0
        skewness = 0.0
        kurtosis = 0.0
        kurt_var_ratio = 0.0
    else:
        variance = m2
        m3 = stats.s3 / n - 3.0 * mean * (stats.s2 / n) + 2.0 * mean**3
        m4 = (
            stats.s4 / n
            - 4.0 * mean * (stats.s3 / n)
            + 6.0 * mean * mean * (stats.s2 / n)
            - 3.0 * mean**4
        )
        skewness = m3 / m2**1.5
        kurtosis = m4 / (m2 * m2)
        kurt_var_ratio = kurtosis / m2
    if abs(mean) < DEGENERATE_EPS or variance == 0.0:
        var_mean_ratio = 0.0
    else:
        var_mean_ratio = variance / mean
    return FeatureVector(
        np.array(
            [
                mean,
                quantile(stats, 0.5),
                variance,
                skewness,
                kurtosis,
                quantile(stats, 0.25),
                quantile(stats, 0.75),
                var_mean_ratio,
                kurt_var_ratio,
            ],
            dtype=np.float64,
        )
    )
