"""Equi-width histograms fitted by least squares on query feedback.

The histogram is ``h = B w`` where ``B`` maps each grid cell to its
bucket and ``w`` holds one height per bucket.  A query's feature vector
is the overlap volume with every bucket, so ``q . h = x(q) . w`` and the
fit is an ordinary (optionally ridge) least-squares problem solved via
the ``b x b`` normal equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .core import (
    AttributeDomain,
    BucketHistogram,
    QueryFeedbackRecord,
    RangeQuery,
    _check_arrays_within,
    qfr_arrays,
    query_arrays,
)

FALLBACK_RIDGE = 1e-8


def split_buckets(total: int, dims: int) -> tuple[int, ...]:
    """Per-dimension bucket counts whose product is at most ``total``.

    Uses the integer ``d``-th root, so 64 buckets in 2-D become 8 x 8 and
    216 in 3-D become 6 x 6 x 6.
    """
    per = max(1, int(round(total ** (1.0 / dims))))
    while per > 1 and per**dims > total:
        per -= 1
    return (per,) * dims


@dataclass(frozen=True)
class EquiLayout:
    """Fixed equi-width grid of buckets over a domain."""

    domain: AttributeDomain
    buckets_per_dim: tuple[int, ...]

    def __post_init__(self):
        b = tuple(int(x) for x in self.buckets_per_dim)
        if len(b) != self.domain.dims:
            raise ValueError("need one bucket count per dimension")
        for bi, r in zip(b, self.domain.ranges):
            if not 1 <= bi <= r:
                raise ValueError(f"bucket count {bi} outside [1, {r}]")
        object.__setattr__(self, "buckets_per_dim", b)

    @classmethod
    def from_total(cls, domain: AttributeDomain, total: int) -> "EquiLayout":
        if not 1 <= total <= domain.volume:
            raise ValueError(f"bucket count {total} outside [1, {domain.volume}]")
        per = split_buckets(total, domain.dims)
        per = tuple(min(p, r) for p, r in zip(per, domain.ranges))
        return cls(domain, per)

    @property
    def size(self) -> int:
        return math.prod(self.buckets_per_dim)

    def edges(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """1-based inclusive ``(lows, highs)`` of the buckets along ``axis``.

        Widths differ by at most one cell when ``b`` does not divide ``r``.
        """
        r = self.domain.ranges[axis]
        b = self.buckets_per_dim[axis]
        cuts = (np.arange(b + 1) * r) // b
        return cuts[:-1] + 1, cuts[1:]

    def bucket_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """``(b, d)`` low/high corners in row-major bucket order."""
        per_axis = [self.edges(a) for a in range(self.domain.dims)]
        grids_lo = np.meshgrid(*[lo for lo, _ in per_axis], indexing="ij")
        grids_hi = np.meshgrid(*[hi for _, hi in per_axis], indexing="ij")
        lows = np.stack([g.ravel() for g in grids_lo], axis=1)
        highs = np.stack([g.ravel() for g in grids_hi], axis=1)
        return lows, highs

    def volumes(self) -> np.ndarray:
        lows, highs = self.bucket_bounds()
        return np.prod(highs - lows + 1, axis=1).astype(float)

    def overlap_matrix(self, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
        """``(N, b)`` overlap volumes between queries and buckets.

        Computed as the row-wise outer product of per-dimension overlaps.
        """
        out = np.ones((lows.shape[0], 1))
        for axis in range(self.domain.dims):
            e_lo, e_hi = self.edges(axis)
            lo = np.maximum(lows[:, axis, None], e_lo[None, :])
            hi = np.minimum(highs[:, axis, None], e_hi[None, :])
            ov = np.clip(hi - lo + 1, 0, None).astype(float)
            out = (out[:, :, None] * ov[:, None, :]).reshape(lows.shape[0], -1)
        return out

    def histogram(self, weights: np.ndarray) -> BucketHistogram:
        """Histogram whose bucket heights are ``weights``."""
        lows, highs = self.bucket_bounds()
        counts = np.asarray(weights, dtype=float) * self.volumes()
        return BucketHistogram(self.domain, lows, highs, counts, validate=False)


def bucket_overlap(q: RangeQuery, layout: EquiLayout) -> np.ndarray:
    """Length-``b`` vector of cells shared by ``q`` and each bucket."""
    q.check_within(layout.domain)
    lows, highs = query_arrays([q], layout.domain.dims)
    return layout.overlap_matrix(lows, highs)[0]


@dataclass(frozen=True)
class LsFit:
    weights: np.ndarray
    ridge: float
    residual_norm: float
    condition: float
    fallback: bool = False


def solve_normal_equations(
    gram: np.ndarray, rhs: np.ndarray, ridge: float | None = 0.0
) -> tuple[np.ndarray, float, float, bool]:
    """Solve ``(gram + ridge I) w = rhs`` with an automatic ridge fallback.

    ``ridge=None`` always uses the scale-free default
    ``1e-8 * trace(gram) / b``; ``ridge=0`` uses it only when ``gram`` is
    numerically singular.  Returns ``(w, ridge_used, condition, fallback)``.
    """
    b = gram.shape[0]
    scale = float(np.trace(gram)) / b if b else 0.0
    auto = FALLBACK_RIDGE * scale if scale > 0 else FALLBACK_RIDGE
    fallback = False
    if ridge is None:
        ridge = auto
    eig = np.linalg.eigvalsh(gram)
    lo, hi = float(eig[0]) + ridge, float(eig[-1]) + ridge
    if hi <= 0 or lo <= 1e-12 * hi:
        ridge = max(ridge, auto)
        fallback = True
        lo, hi = float(eig[0]) + ridge, float(eig[-1]) + ridge
    cond = hi / lo if lo > 0 else math.inf
    a = gram + ridge * np.eye(b)
    try:
        w = scipy.linalg.solve(a, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        w = np.linalg.lstsq(a, rhs, rcond=None)[0]
    return w, float(ridge), float(cond), fallback


def accumulate(layout: EquiLayout, qfrs: Sequence[QueryFeedbackRecord]):
    """Return ``(G, c, N)`` with ``G = X^T X`` and ``c = X^T s``."""
    lows, highs, s = qfr_arrays(qfrs, layout.domain.dims)
    _check_arrays_within(lows, highs, layout.domain)
    x = layout.overlap_matrix(lows, highs)
    return x.T @ x, x.T @ s, len(s)


def fit_equihist(
    qfrs: Sequence[QueryFeedbackRecord], layout: EquiLayout, ridge: float = 0.0
) -> tuple[LsFit, BucketHistogram]:
    """Least-squares bucket heights for a fixed equi-width layout.

    Minimizes ``(1/N) sum (x_i . w - s_i)**2 + ridge * |w|**2``.  A
    singular system with ``ridge=0`` falls back to a tiny ridge, reported
    in the returned :class:`LsFit`.
    """
    if len(qfrs) < 1:
        raise ValueError("need at least one QFR")
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    gram, rhs, n = accumulate(layout, qfrs)
    w, used, cond, fallback = solve_normal_equations(gram / n, rhs / n, ridge)
    lows, highs, s = qfr_arrays(qfrs, layout.domain.dims)
    resid = layout.overlap_matrix(lows, highs) @ w - s
    fit = LsFit(w, used, float(np.linalg.norm(resid)), cond, fallback)
    return fit, layout.histogram(w)
