"""Sparse Haar recovery of histograms from query feedback.

The histogram's Haar coefficients ``alpha`` are recovered with orthogonal
matching pursuit on the measurement matrix ``A = Q^T Psi^T`` (one row per
QFR, one column per Haar atom).  ``A`` is never formed: the correlation
``A^T z`` equals the Haar transform of ``sum_i z_i 1_{q_i}``, which is
accumulated with a difference array, and a selected column is evaluated
directly from interval/atom inner products.

The recovered signal is piecewise constant with few pieces; a v-optimal
dynamic program over those pieces then yields exactly ``k`` buckets in
1-D.  For ``d >= 2`` a greedy top-down box split stands in for the DP.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from . import haar
from .core import (
    AttributeDomain,
    BucketHistogram,
    QueryFeedbackRecord,
    WaveletSketch,
    _check_arrays_within,
    box_sums,
    check_cell_limit,
    qfr_arrays,
)

SELECTION_RULES = ("absolute", "signed")


@dataclass(frozen=True)
class OmpOptions:
    """Knobs for :func:`omp`.

    ``selection_rule="signed"`` picks ``argmax z^T A_j`` literally;
    ``"absolute"`` (default) picks ``argmax |z^T A_j|``.  With
    ``normalize_columns`` scores are divided by ``|A_j|``.
    """

    k: int
    selection_rule: str = "absolute"
    normalize_columns: bool = False
    min_residual: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.selection_rule not in SELECTION_RULES:
            raise ValueError(f"unknown selection rule {self.selection_rule!r}")
        if self.min_residual < 0:
            raise ValueError("min_residual must be >= 0")


@dataclass
class OmpResult:
    sketch: WaveletSketch
    support: list[int]  # selection order, 1-based flat indices
    residual_norms: list[float]  # |z_t| after each refit, starting with |s|
    stopped_early: bool
    columns: np.ndarray = field(repr=False)  # A_S in selection order
    residual: np.ndarray = field(repr=False)


def correlations(lows, highs, z, padded) -> np.ndarray:
    """``A^T z`` for every Haar atom, flattened row-major."""
    dense = haar.weighted_query_sum(lows, highs, z, padded)
    return haar.fwt_nd(dense).ravel()


def dense_measurement_matrix(lows, highs, padded) -> np.ndarray:
    """Explicit ``A`` (``N x prod(padded)``); reference use on small grids."""
    size = math.prod(padded)
    check_cell_limit(len(lows) * size)
    return haar.range_basis_dot(lows, highs, np.arange(1, size + 1), padded)


def column_norms(lows, highs, padded, chunk: int = 64) -> np.ndarray:
    """``|A_j|_2`` for every atom, from chunked dense query transforms."""
    size = math.prod(padded)
    sq = np.zeros(size)
    for start in range(0, len(lows), chunk):
        lo = lows[start : start + chunk]
        hi = highs[start : start + chunk]
        block = np.zeros((len(lo),) + tuple(padded))
        for i in range(len(lo)):
            block[(i,) + tuple(slice(a - 1, b) for a, b in zip(lo[i], hi[i]))] = 1.0
        for axis in range(1, block.ndim):
            block = haar.fwt(block, axis=axis)
        sq += (block.reshape(len(lo), -1) ** 2).sum(axis=0)
    return np.sqrt(sq)


def run_omp(
    qfrs: Sequence[QueryFeedbackRecord], domain: AttributeDomain, opts: OmpOptions
) -> OmpResult:
    """Orthogonal matching pursuit with lazily evaluated atoms.

    The support least-squares problem is kept as an incremental QR
    factorisation (Gram-Schmidt with one re-orthogonalisation pass).
    Ties in the selection score go to the smallest index.
    """
    if not qfrs:
        raise ValueError("need at least one QFR")
    padded = haar.padded_ranges(domain.ranges)
    size = math.prod(padded)
    check_cell_limit(size)
    if opts.k > size:
        raise ValueError(f"k={opts.k} exceeds the {size} available atoms")
    lows, highs, s = qfr_arrays(qfrs, domain.dims)
    _check_arrays_within(lows, highs, domain)

    norms = column_norms(lows, highs, padded) if opts.normalize_columns else None
    n = len(s)
    s_norm = float(np.linalg.norm(s))
    q_basis = np.zeros((n, opts.k))
    r_mat = np.zeros((opts.k, opts.k))
    cols = np.zeros((n, opts.k))
    support: list[int] = []
    blocked = np.zeros(size, dtype=bool)
    z = s.copy()
    alpha = np.zeros(0)
    history = [s_norm]
    stopped = False

    while len(support) < opts.k:
        if history[-1] <= opts.min_residual or history[-1] == 0.0:
            stopped = len(support) < opts.k
            break
        corr = correlations(lows, highs, z, padded)
        score = corr.copy() if opts.selection_rule == "signed" else np.abs(corr)
        if norms is not None:
            score = np.divide(score, norms, out=np.zeros_like(score), where=norms > 0)
        score[blocked] = -np.inf
        j = int(np.argmax(score))
        if not np.isfinite(score[j]):
            stopped = True
            break
        col = haar.range_basis_dot(lows, highs, [j + 1], padded)[:, 0]
        col_norm = float(np.linalg.norm(col))
        # a vanishing correlation means nothing useful is left to select
        if score[j] <= 0 or abs(corr[j]) <= 1e-12 * max(s_norm, 1.0) * max(col_norm, 1.0):
            stopped = True
            break
        t = len(support)
        qb = q_basis[:, :t]
        proj = qb.T @ col
        v = col - qb @ proj
        proj2 = qb.T @ v
        v -= qb @ proj2
        proj += proj2
        v_norm = float(np.linalg.norm(v))
        blocked[j] = True
        if v_norm <= 1e-10 * col_norm:
            # column already in the span of the support
            continue
        q_basis[:, t] = v / v_norm
        r_mat[:t, t] = proj
        r_mat[t, t] = v_norm
        cols[:, t] = col
        support.append(j + 1)
        t += 1
        alpha = scipy.linalg.solve_triangular(r_mat[:t, :t], q_basis[:, :t].T @ s)
        z = s - cols[:, :t] @ alpha
        history.append(float(np.linalg.norm(z)))

    sketch = WaveletSketch(domain, np.array(support, dtype=np.int64), alpha)
    t = len(support)
    return OmpResult(sketch, support, history, stopped, cols[:, :t].copy(), z)


def omp(
    qfrs: Sequence[QueryFeedbackRecord], domain: AttributeDomain, opts: OmpOptions
) -> WaveletSketch:
    """Sparse Haar coefficients with at most ``opts.k`` non-zeros."""
    return run_omp(qfrs, domain, opts).sketch


@dataclass(frozen=True)
class PiecewiseSignal:
    """1-D signal stored as runs of constant height."""

    lengths: np.ndarray
    heights: np.ndarray

    def __post_init__(self):
        lengths = np.array(self.lengths, dtype=np.int64, ndmin=1)
        heights = np.array(self.heights, dtype=float, ndmin=1)
        if lengths.shape != heights.shape or lengths.size == 0:
            raise ValueError("need matching, non-empty lengths and heights")
        if np.any(lengths < 1):
            raise ValueError("run lengths must be >= 1")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "heights", heights)

    @classmethod
    def from_dense(cls, x, rtol: float = 1e-9) -> "PiecewiseSignal":
        """Merge adjacent cells whose values agree to ``rtol`` of the peak."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            raise ValueError("empty signal")
        scale = max(1.0, float(np.max(np.abs(x))))
        breaks = np.flatnonzero(np.abs(np.diff(x)) > rtol * scale) + 1
        starts = np.concatenate([[0], breaks])
        ends = np.concatenate([breaks, [x.size]])
        heights = np.array([x[a:b].mean() for a, b in zip(starts, ends)])
        return cls(ends - starts, heights)

    def __len__(self) -> int:
        return int(self.lengths.size)

    @property
    def size(self) -> int:
        return int(self.lengths.sum())

    def to_dense(self) -> np.ndarray:
        return np.repeat(self.heights, self.lengths)


def _segment_costs(sig: PiecewiseSignal) -> tuple[np.ndarray, np.ndarray]:
    """SSE and mass of every contiguous piece range ``[p, i)``."""
    w = np.concatenate([[0.0], np.cumsum(sig.lengths)])
    s = np.concatenate([[0.0], np.cumsum(sig.lengths * sig.heights)])
    q = np.concatenate([[0.0], np.cumsum(sig.lengths * sig.heights**2)])
    dw = w[None, :] - w[:, None]
    ds = s[None, :] - s[:, None]
    dq = q[None, :] - q[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = dq - ds**2 / dw
    sse = np.where(dw > 0, np.maximum(sse, 0.0), np.inf)
    return sse, ds


def partition_sse(sig: PiecewiseSignal, cuts: Sequence[int]) -> float:
    """Weighted SSE when buckets end after the given piece indices."""
    sse, _ = _segment_costs(sig)
    edges = [0, *cuts, len(sig)]
    return float(sum(sse[a, b] for a, b in zip(edges[:-1], edges[1:])))


def dp_reduce(sig: PiecewiseSignal, k: int) -> BucketHistogram:
    """Optimal ``k``-bucket histogram with boundaries at piece edges.

    Minimizes the run-length weighted squared deviation from each bucket's
    mean in ``O(k m^2)`` for ``m`` pieces.  With ``k >= m`` the pieces are
    returned as they are.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m = len(sig)
    domain = AttributeDomain((sig.size,))
    ends = np.cumsum(sig.lengths)
    if k >= m:
        lows = np.concatenate([[1], ends[:-1] + 1])
        return BucketHistogram(
            domain, lows[:, None], ends[:, None], sig.lengths * sig.heights
        )
    sse, mass = _segment_costs(sig)
    cost = np.full(m + 1, np.inf)
    cost[0] = 0.0
    back = np.zeros((k + 1, m + 1), dtype=np.int64)
    for j in range(1, k + 1):
        # cand[p, i]: best j-1 buckets over [0, p) then one bucket [p, i)
        cand = cost[:, None] + sse
        back[j] = np.argmin(cand, axis=0)
        cost = cand[back[j], np.arange(m + 1)]
    edges = [m]
    for j in range(k, 0, -1):
        edges.append(int(back[j, edges[-1]]))
    edges = edges[::-1]
    starts, stops = np.array(edges[:-1]), np.array(edges[1:])
    cell_ends = np.concatenate([[0], ends])
    lows = cell_ends[starts] + 1
    highs = cell_ends[stops]
    counts = mass[starts, stops]
    return BucketHistogram(domain, lows[:, None], highs[:, None], counts)


def brute_force_reduce(sig: PiecewiseSignal, k: int) -> float:
    """Exhaustive minimum SSE over all boundary placements; test oracle."""
    m = len(sig)
    if k >= m:
        return 0.0
    heights = sig.heights
    lengths = sig.lengths
    best = math.inf
    for cuts in itertools.combinations(range(1, m), k - 1):
        edges = (0, *cuts, m)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            h = np.repeat(heights[a:b], lengths[a:b])
            total += float(((h - h.mean()) ** 2).sum())
        best = min(best, total)
    return best


def greedy_box_partition(dense: np.ndarray, k: int, domain: AttributeDomain) -> BucketHistogram:
    """Top-down binary splits of a dense tensor into ``k`` boxes.

    Each step applies the single axis-aligned cut with the largest SSE
    reduction over all current boxes.  Exact box sums come from
    summed-area tables of the values and their squares.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(dense, dtype=float)
    d = x.ndim
    s_tab = np.zeros(tuple(n + 1 for n in x.shape))
    q_tab = np.zeros_like(s_tab)
    inner = tuple(slice(1, None) for _ in range(d))
    acc_s, acc_q = x, x**2
    for axis in range(d):
        acc_s = np.cumsum(acc_s, axis=axis)
        acc_q = np.cumsum(acc_q, axis=axis)
    s_tab[inner] = acc_s
    q_tab[inner] = acc_q

    def box_stats(lo, hi):
        # lo/hi: (n, d) 1-based inclusive corners
        return box_sums(s_tab, lo, hi), box_sums(q_tab, lo, hi), np.prod(hi - lo + 1, axis=1)

    def best_split(lo, hi):
        best = (-np.inf, -1, -1)
        s0, q0, v0 = (a[0] for a in box_stats(lo[None], hi[None]))
        base = q0 - s0**2 / v0
        for axis in range(d):
            if hi[axis] <= lo[axis]:
                continue
            cuts = np.arange(lo[axis], hi[axis])
            left_lo = np.repeat(lo[None], len(cuts), axis=0)
            left_hi = np.repeat(hi[None], len(cuts), axis=0)
            left_hi[:, axis] = cuts
            right_lo = np.repeat(lo[None], len(cuts), axis=0)
            right_lo[:, axis] = cuts + 1
            right_hi = np.repeat(hi[None], len(cuts), axis=0)
            sl, ql, vl = box_stats(left_lo, left_hi)
            sr, qr, vr = box_stats(right_lo, right_hi)
            gain = base - (ql - sl**2 / vl) - (qr - sr**2 / vr)
            i = int(np.argmax(gain))
            if gain[i] > best[0]:
                best = (float(gain[i]), axis, int(cuts[i]))
        return best

    counter = itertools.count()
    lo0 = np.ones(d, dtype=np.int64)
    hi0 = np.asarray(x.shape, dtype=np.int64)
    final = []
    heap = []

    def push(lo, hi):
        gain, axis, cut = best_split(lo, hi)
        if axis < 0:
            final.append((lo, hi))
        else:
            heapq.heappush(heap, (-gain, next(counter), lo, hi, axis, cut))

    push(lo0, hi0)
    while heap and len(heap) + len(final) < k:
        _, _, lo, hi, axis, cut = heapq.heappop(heap)
        l_hi = hi.copy()
        l_hi[axis] = cut
        r_lo = lo.copy()
        r_lo[axis] = cut + 1
        push(lo, l_hi)
        push(r_lo, hi)
    boxes = final + [(lo, hi) for _, _, lo, hi, _, _ in heap]
    lows = np.array([b[0] for b in boxes])
    highs = np.array([b[1] for b in boxes])
    order = np.lexsort(lows.T[::-1])
    lows, highs = lows[order], highs[order]
    counts = box_stats(lows, highs)[0]
    return BucketHistogram(domain, lows, highs, counts)


@dataclass
class SpHistFit:
    sketch: WaveletSketch
    histogram: BucketHistogram
    omp: OmpResult
    pieces: int


def fit_sphist(
    qfrs: Sequence[QueryFeedbackRecord],
    domain: AttributeDomain,
    k: int,
    omp_budget: int | None = None,
    selection_rule: str = "absolute",
    normalize_columns: bool = False,
) -> tuple[WaveletSketch, BucketHistogram]:
    """Recover a sparse sketch, reconstruct it and reduce to ``k`` buckets."""
    fit = fit_sphist_full(qfrs, domain, k, omp_budget, selection_rule, normalize_columns)
    return fit.sketch, fit.histogram


def fit_sphist_full(
    qfrs: Sequence[QueryFeedbackRecord],
    domain: AttributeDomain,
    k: int,
    omp_budget: int | None = None,
    selection_rule: str = "absolute",
    normalize_columns: bool = False,
) -> SpHistFit:
    budget = k if omp_budget is None else omp_budget
    padded_size = math.prod(haar.padded_ranges(domain.ranges))
    opts = OmpOptions(min(budget, padded_size), selection_rule, normalize_columns)
    res = run_omp(qfrs, domain, opts)
    dense = res.sketch.to_dense()
    if domain.dims == 1:
        sig = PiecewiseSignal.from_dense(dense)
        hist = dp_reduce(sig, k)
        pieces = len(sig)
    else:
        hist = greedy_box_partition(dense, min(k, domain.volume), domain)
        pieces = len(hist)
    return SpHistFit(res.sketch, hist, res, pieces)
