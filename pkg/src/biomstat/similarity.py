"""Pairwise cosine-similarity statistics over an embedding sequence.

The N(N-1)/2 unordered pair similarities are computed blockwise as dense
float64 matrix products and reduced to power sums S1..S4 plus a quantile
source: either the full pair buffer (exact mode, float32, sorted) or a
fixed-width histogram over [-1, 1] (streaming mode, O(1) memory in N).

Determinism: blocks are enumerated in a fixed order and partial results are
merged in that order, with BLAS pinned to one thread inside the kernel, so
the output is bit-identical regardless of the worker thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import InsufficientDataError, ValidationError
from .store import EmbeddingSequence

MODE_EXACT = "exact"
MODE_STREAMING = "streaming"

DEFAULT_BIN_COUNT = 4096

# float32 embeddings with norms within 1e-4 of 1 bound every pair value
# to [-1 - 5e-4, 1 + 5e-4].
SIMILARITY_SLACK = 5e-4

_BLOCK = 1024


def cosine_similarity(a, b) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(min(1.0, max(-1.0, float(a @ b))))


@dataclass(frozen=True)
class BinnedHistogram:
    """Uniform-width counts over [lo, hi]; values are clamped before binning."""

    counts: np.ndarray
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def bin_count(self) -> int:
        return self.counts.shape[0]

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.bin_count

    def bin_edges(self) -> np.ndarray:
        return self.lo + self.bin_width * np.arange(self.bin_count + 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class SimilarityStats:
    """Reduction of all pairwise similarities of one sequence.

    ``s1``..``s4`` are float64 power sums over the pair values. Exact mode
    keeps every pair value (float32, sorted ascending); streaming mode keeps
    only the histogram.
    """

    pair_count: int
    s1: float
    s2: float
    s3: float
    s4: float
    mode: str
    values: np.ndarray | None = None
    histogram: BinnedHistogram | None = None

    def __post_init__(self) -> None:
        if self.values is not None:
            vals = np.ascontiguousarray(self.values, dtype=np.float32)
            vals.setflags(write=False)
            object.__setattr__(self, "values", vals)


def _bin_indices(values32: np.ndarray, bin_count: int) -> np.ndarray:
    clipped = np.clip(values32.astype(np.float64), -1.0, 1.0)
    idx = np.floor((clipped + 1.0) * (bin_count / 2.0)).astype(np.int64)
    return np.minimum(idx, bin_count - 1)


def _block_pairs(n: int) -> list[tuple[int, int]]:
    starts = list(range(0, n, _BLOCK))
    return [(i0, j0) for i0 in starts for j0 in starts if j0 >= i0]


def pairwise_stats(
    seq: EmbeddingSequence,
    mode: str = MODE_EXACT,
    max_frames: int | None = None,
    threads: int = 1,
    bin_count: int = DEFAULT_BIN_COUNT,
    limit_blas: bool = True,
) -> SimilarityStats:
    """Reduce all unordered pair similarities of ``seq`` to SimilarityStats.

    ``max_frames`` truncates to the first frames (prefix) before pairing.
    Requires at least 3 frames after truncation. ``threads`` parallelizes
    across blocks without changing the result. ``limit_blas=False`` skips the
    process-global BLAS pin; callers that parallelize across videos must then
    hold the pin themselves for the whole batch.
    """
    if mode not in (MODE_EXACT, MODE_STREAMING):
        raise ValidationError(f"unknown mode {mode!r}")
    emb = seq.truncated(max_frames).embeddings
    n = emb.shape[0]
    if n < 3:
        raise InsufficientDataError(
            f'video "{seq.video_id}": insufficient frames (N={n}, need at least 3)'
        )
    pair_count = n * (n - 1) // 2
    e64 = emb.astype(np.float64)

    pairs = _block_pairs(n)
    offsets = []
    off = 0
    for i0, j0 in pairs:
        mi = min(_BLOCK, n - i0)
        mj = min(_BLOCK, n - j0)
        size = mi * (mi - 1) // 2 if i0 == j0 else mi * mj
        offsets.append(off)
        off += size
    assert off == pair_count

    buffer = np.empty(pair_count, dtype=np.float32) if mode == MODE_EXACT else None

    def run_block(k: int):
        i0, j0 = pairs[k]
        mi = min(_BLOCK, n - i0)
        blk = e64[i0 : i0 + mi] @ e64[j0 : j0 + min(_BLOCK, n - j0)].T
        if i0 == j0:
            v64 = blk[np.triu_indices(mi, 1)]
        else:
            v64 = blk.ravel()
        v32 = v64.astype(np.float32)
        v2 = v64 * v64
        sums = (
            float(v64.sum()),
            float(v2.sum()),
            float((v2 * v64).sum()),
            float((v2 * v2).sum()),
        )
        if buffer is not None:
            buffer[offsets[k] : offsets[k] + v32.size] = v32
            counts = None
        else:
            counts = np.bincount(_bin_indices(v32, bin_count), minlength=bin_count)
        return sums, counts

    def run_all():
        if threads > 1 and len(pairs) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(run_block, range(len(pairs))))
        return [run_block(k) for k in range(len(pairs))]

    if limit_blas:
        with threadpool_limits(limits=1):
            results = run_all()
    else:
        results = run_all()

    s1 = s2 = s3 = s4 = 0.0
    hist_counts = np.zeros(bin_count, dtype=np.int64) if mode == MODE_STREAMING else None
    for sums, counts in results:
        s1 += sums[0]
        s2 += sums[1]
        s3 += sums[2]
        s4 += sums[3]
        if hist_counts is not None:
            hist_counts += counts

    if mode == MODE_EXACT:
        buffer.sort()
        return SimilarityStats(pair_count, s1, s2, s3, s4, mode, values=buffer)
    return SimilarityStats(
        pair_count, s1, s2, s3, s4, mode, histogram=BinnedHistogram(hist_counts)
    )


def _histogram_rank_value(hist: BinnedHistogram, rank: int) -> float:
    """Estimate of the rank-th smallest value, interpolated inside its bin.

    The true order statistic lies in the same bin, so the estimate is off by
    less than one bin width.
    """
    cum = np.cumsum(hist.counts)
    k = int(np.searchsorted(cum, rank, side="right"))
    before = int(cum[k]) - int(hist.counts[k])
    frac = (rank - before + 0.5) / int(hist.counts[k])
    return hist.lo + (k + frac) * hist.bin_width


def quantile(stats: SimilarityStats, q: float) -> float:
    """Interpolated quantile of the pair-similarity distribution.

    Both modes target rank h = q*(n-1) and blend the floor(h)- and
    ceil(h)-rank values. Exact mode reads them off the sorted buffer;
    streaming mode estimates each inside its histogram bin, which keeps the
    result within one bin width of the exact-mode value on any input.
    """
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"q outside [0, 1]: {q}")
    if stats.pair_count < 1:
        raise InsufficientDataError("empty similarity stats")
    h = q * (stats.pair_count - 1)
    i0 = math.floor(h)
    i1 = math.ceil(h)
    if stats.mode == MODE_EXACT:
        lo = float(stats.values[i0])
        hi = float(stats.values[i1])
        return lo + (h - i0) * (hi - lo)
    lo = _histogram_rank_value(stats.histogram, i0)
    hi = lo if i1 == i0 else _histogram_rank_value(stats.histogram, i1)
    return lo + (h - i0) * (hi - lo)


def histogram_rows(hist: BinnedHistogram) -> list[tuple[float, float, int]]:
    """(bin_lo, bin_hi, count) rows for CSV output."""
    edges = hist.bin_edges()
    return [
        (float(edges[k]), float(edges[k + 1]), int(hist.counts[k]))
        for k in range(hist.bin_count)
    ]
