"""Domain types shared by every estimator, plus cardinality evaluation.

Cells are addressed with 1-based inclusive integer coordinates, matching
how range predicates are written (``5 <= A <= 10``).  Internally every
dense array is 0-based and row-major (last dimension varies fastest).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import haar

DEFAULT_CELL_LIMIT = 2**24
CELL_LIMIT_ENV = "HISTLEARN_CELL_LIMIT"


class DomainError(ValueError):
    """A query, bucket or value falls outside the attribute domain."""


class CellLimitError(MemoryError):
    """Materializing a dense tensor would exceed the configured cell limit."""


def cell_limit() -> int:
    """Return the dense-materialization guard, honouring the env override."""
    raw = os.environ.get(CELL_LIMIT_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_CELL_LIMIT
    return int(raw)


def check_cell_limit(n_cells: int, limit: int | None = None) -> None:
    limit = cell_limit() if limit is None else limit
    if n_cells > limit:
        raise CellLimitError(
            f"{n_cells} cells exceeds the dense limit of {limit} "
            f"(set {CELL_LIMIT_ENV} to raise it)"
        )


@dataclass(frozen=True)
class AttributeDomain:
    """Integer attribute domain ``[1, r_1] x ... x [1, r_d]``."""

    ranges: tuple[int, ...]

    def __post_init__(self):
        ranges = tuple(int(r) for r in self.ranges)
        if len(ranges) < 1:
            raise ValueError("domain needs at least one dimension")
        if any(r < 1 for r in ranges):
            raise ValueError(f"every range must be >= 1, got {ranges}")
        object.__setattr__(self, "ranges", ranges)

    @property
    def dims(self) -> int:
        return len(self.ranges)

    @property
    def volume(self) -> int:
        return math.prod(self.ranges)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.ranges

    def full_query(self) -> "RangeQuery":
        return RangeQuery(tuple((1, r) for r in self.ranges))


@dataclass(frozen=True)
class RangeQuery:
    """Axis-aligned hyper-rectangle given as closed intervals per dimension."""

    bounds: tuple[tuple[int, int], ...]

    def __post_init__(self):
        bounds = tuple((int(lo), int(hi)) for lo, hi in self.bounds)
        if not bounds:
            raise ValueError("query needs at least one interval")
        for lo, hi in bounds:
            if lo > hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_flat(cls, values: Sequence[int]) -> "RangeQuery":
        """Build from ``[l1, u1, ..., ld, ud]``."""
        if len(values) % 2:
            raise ValueError("flat bounds need an even number of values")
        it = iter(values)
        return cls(tuple(zip(it, it)))

    @property
    def dims(self) -> int:
        return len(self.bounds)

    @property
    def volume(self) -> int:
        return math.prod(hi - lo + 1 for lo, hi in self.bounds)

    def flat(self) -> list[int]:
        return [v for pair in self.bounds for v in pair]

    def check_within(self, domain: AttributeDomain) -> None:
        if self.dims != domain.dims:
            raise DomainError(
                f"query has {self.dims} dimensions, domain has {domain.dims}"
            )
        for (lo, hi), r in zip(self.bounds, domain.ranges):
            if lo < 1 or hi > r:
                raise DomainError(f"interval [{lo}, {hi}] outside [1, {r}]")


@dataclass(frozen=True)
class QueryFeedbackRecord:
    """A range query paired with its observed cardinality."""

    query: RangeQuery
    cardinality: float

    def __post_init__(self):
        if not self.cardinality >= 0:
            raise ValueError(f"cardinality must be >= 0, got {self.cardinality}")


def query_arrays(
    queries: Iterable[RangeQuery], dims: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Stack queries into ``(lows, highs)`` integer arrays of shape ``(N, d)``."""
    flat = [q.flat() for q in queries]
    if not flat:
        d = 1 if dims is None else dims
        return np.zeros((0, d), dtype=np.int64), np.zeros((0, d), dtype=np.int64)
    arr = np.asarray(flat, dtype=np.int64)
    return arr[:, 0::2], arr[:, 1::2]


def qfr_arrays(qfrs: Sequence[QueryFeedbackRecord], dims: int | None = None):
    """Return ``(lows, highs, cardinalities)`` for a list of QFRs."""
    lows, highs = query_arrays((r.query for r in qfrs), dims)
    s = np.asarray([r.cardinality for r in qfrs], dtype=float)
    return lows, highs, s


def _check_arrays_within(lows, highs, domain: AttributeDomain) -> None:
    if lows.shape[1] != domain.dims:
        raise DomainError(
            f"queries have {lows.shape[1]} dimensions, domain has {domain.dims}"
        )
    r = np.asarray(domain.ranges)
    if lows.size and (np.any(lows < 1) or np.any(highs > r) or np.any(lows > highs)):
        raise DomainError("query outside the attribute domain")


@dataclass(frozen=True, eq=False)
class FrequencyTensor:
    """Exact per-cell record counts; the ground truth for cardinalities."""

    domain: AttributeDomain
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != self.domain.shape:
            raise ValueError(
                f"counts shape {counts.shape} does not match domain {self.domain.shape}"
            )
        if counts.size and counts.min() < 0:
            raise ValueError("counts must be non-negative")
        counts = counts.astype(np.int64, copy=True)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, domain: AttributeDomain) -> "FrequencyTensor":
        return cls(domain, np.zeros(domain.shape, dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def prefix_sums(self) -> np.ndarray:
        """Summed-area table padded with a leading zero plane on every axis."""
        table = np.zeros(tuple(r + 1 for r in self.domain.ranges), dtype=np.int64)
        inner = tuple(slice(1, None) for _ in self.domain.ranges)
        acc = self.counts
        for axis in range(self.domain.dims):
            acc = np.cumsum(acc, axis=axis)
        table[inner] = acc
        return table


def exact_cardinality(freq: FrequencyTensor, q: RangeQuery) -> int:
    """Number of records inside ``q``."""
    q.check_within(freq.domain)
    idx = tuple(slice(lo - 1, hi) for lo, hi in q.bounds)
    return int(freq.counts[idx].sum())


def box_sums(table: np.ndarray, lows: np.ndarray, highs: np.ndarray) -> np.ndarray:
    """Inclusion-exclusion box sums from a zero-padded summed-area table.

    ``lows``/``highs`` are 1-based inclusive, shape ``(N, d)``.
    """
    n, d = lows.shape
    out = np.zeros(n, dtype=table.dtype)
    for corner in range(2**d):
        idx = []
        sign = 1
        for axis in range(d):
            if corner >> axis & 1:
                idx.append(lows[:, axis] - 1)
                sign = -sign
            else:
                idx.append(highs[:, axis])
        out += sign * table[tuple(idx)]
    return out


def exact_cardinalities(freq: FrequencyTensor, queries: Sequence[RangeQuery]) -> np.ndarray:
    """Vectorized :func:`exact_cardinality` over many queries."""
    lows, highs = query_arrays(queries, freq.domain.dims)
    _check_arrays_within(lows, highs, freq.domain)
    return box_sums(freq.prefix_sums(), lows, highs)


@dataclass(frozen=True, eq=False)
class BucketHistogram:
    """Non-overlapping axis-aligned buckets that partition the domain.

    ``lows`` and ``highs`` have shape ``(k, d)`` (1-based, inclusive) and
    ``counts`` holds the estimated number of records in each bucket.  Counts
    are reals and may be negative straight out of a least-squares fit.
    """

    domain: AttributeDomain
    lows: np.ndarray
    highs: np.ndarray
    counts: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        lows = np.array(self.lows, dtype=np.int64, ndmin=2)
        highs = np.array(self.highs, dtype=np.int64, ndmin=2)
        counts = np.array(self.counts, dtype=float, ndmin=1)
        if lows.shape != highs.shape or lows.shape[0] != counts.shape[0]:
            raise ValueError("bucket bounds and counts disagree in length")
        if lows.shape[1] != self.domain.dims:
            raise DomainError("bucket dimensionality does not match the domain")
        for a in (lows, highs, counts):
            a.setflags(write=False)
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)
        object.__setattr__(self, "counts", counts)
        if self.validate:
            self._check_partition()

    @classmethod
    def from_buckets(cls, domain, buckets) -> "BucketHistogram":
        """Build from ``[(bounds, count), ...]`` with ``bounds`` as interval pairs."""
        lows = [[lo for lo, _ in b] for b, _ in buckets]
        highs = [[hi for _, hi in b] for b, _ in buckets]
        counts = [c for _, c in buckets]
        return cls(domain, lows, highs, counts)

    def _check_partition(self) -> None:
        r = np.asarray(self.domain.ranges)
        if np.any(self.lows < 1) or np.any(self.highs > r) or np.any(self.lows > self.highs):
            raise DomainError("bucket outside the domain or empty")
        vol = self.volumes()
        if int(vol.sum()) != self.domain.volume:
            raise ValueError("buckets do not cover the domain exactly")
        # equal total volume plus no pairwise overlap implies a partition
        k = len(vol)
        if k > 1 and k <= 4096:
            ov = np.ones((k, k), dtype=np.int64)
            for axis in range(self.domain.dims):
                lo = np.maximum(self.lows[:, None, axis], self.lows[None, :, axis])
                hi = np.minimum(self.highs[:, None, axis], self.highs[None, :, axis])
                ov *= np.clip(hi - lo + 1, 0, None)
            np.fill_diagonal(ov, 0)
            if ov.any():
                raise ValueError("buckets overlap")

    def __len__(self) -> int:
        return len(self.counts)

    def volumes(self) -> np.ndarray:
        return np.prod(self.highs - self.lows + 1, axis=1)

    @property
    def heights(self) -> np.ndarray:
        """Per-cell estimated frequency inside each bucket."""
        return self.counts / self.volumes()

    def buckets(self):
        """Iterate ``(bounds, count)`` pairs."""
        for lo, hi, c in zip(self.lows, self.highs, self.counts):
            yield tuple(zip(lo.tolist(), hi.tolist())), float(c)


def overlap_volumes(
    lows: np.ndarray, highs: np.ndarray, b_lows: np.ndarray, b_highs: np.ndarray
) -> np.ndarray:
    """``(N, k)`` matrix of cell counts shared by query ``i`` and box ``j``."""
    out = np.ones((lows.shape[0], b_lows.shape[0]))
    for axis in range(lows.shape[1]):
        lo = np.maximum(lows[:, None, axis], b_lows[None, :, axis])
        hi = np.minimum(highs[:, None, axis], b_highs[None, :, axis])
        out *= np.clip(hi - lo + 1, 0, None)
    return out


def estimate_cardinality_hist(h: BucketHistogram, q: RangeQuery, clamp: bool = False) -> float:
    """Estimated cardinality: sum of bucket height times overlap volume.

    Set ``clamp`` to report ``max(0, estimate)``.
    """
    q.check_within(h.domain)
    return float(estimate_many_hist(h, [q], clamp=clamp)[0])


def estimate_many_hist(
    h: BucketHistogram, queries: Sequence[RangeQuery], clamp: bool = False
) -> np.ndarray:
    lows, highs = query_arrays(queries, h.domain.dims)
    _check_arrays_within(lows, highs, h.domain)
    est = np.zeros(len(lows))
    # chunk so the (N, k) overlap matrix stays modest
    step = max(1, 2**22 // max(1, len(h)))
    heights = h.heights
    for start in range(0, len(lows), step):
        sl = slice(start, start + step)
        est[sl] = overlap_volumes(lows[sl], highs[sl], h.lows, h.highs) @ heights
    return np.maximum(est, 0.0) if clamp else est


def histogram_to_dense(h: BucketHistogram, limit: int | None = None) -> np.ndarray:
    """Materialize the per-cell frequency vector/tensor of ``h``."""
    check_cell_limit(h.domain.volume, limit)
    dense = np.zeros(h.domain.shape)
    for lo, hi, height in zip(h.lows, h.highs, h.heights):
        dense[tuple(slice(a - 1, b) for a, b in zip(lo, hi))] = height
    return dense


def unary_query(q: RangeQuery, domain: AttributeDomain) -> np.ndarray:
    """Dense 0/1 indicator tensor of ``q``; used by tests and small oracles."""
    q.check_within(domain)
    check_cell_limit(domain.volume)
    out = np.zeros(domain.shape)
    out[tuple(slice(lo - 1, hi) for lo, hi in q.bounds)] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class WaveletSketch:
    """Sparse Haar coefficients of a histogram on the zero-padded grid.

    ``indices`` are 1-based flat indices into the padded coefficient tensor
    (row-major), sorted ascending and unique.
    """

    domain: AttributeDomain
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64, ndmin=1)
        val = np.array(self.values, dtype=float, ndmin=1)
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        order = np.argsort(idx, kind="stable")
        idx, val = idx[order], val[order]
        if idx.size:
            if np.any(np.diff(idx) == 0):
                raise ValueError("duplicate coefficient index")
            if idx[0] < 1 or idx[-1] > math.prod(self.padded):
                raise ValueError(
                    f"coefficient index outside 1..{math.prod(self.padded)}"
                )
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @property
    def padded(self) -> tuple[int, ...]:
        return haar.padded_ranges(self.domain.ranges)

    @property
    def support_size(self) -> int:
        return int(self.indices.size)

    def entries(self):
        return list(zip(self.indices.tolist(), self.values.tolist()))

    def coefficient_tensor(self, limit: int | None = None) -> np.ndarray:
        check_cell_limit(math.prod(self.padded), limit)
        alpha = np.zeros(math.prod(self.padded))
        alpha[self.indices - 1] = self.values
        return alpha.reshape(self.padded)

    def to_dense(self, limit: int | None = None) -> np.ndarray:
        """Reconstructed per-cell frequencies, padding stripped."""
        full = haar.ifwt_nd(self.coefficient_tensor(limit))
        return full[tuple(slice(0, r) for r in self.domain.ranges)]


def estimate_cardinality_sketch(sk: WaveletSketch, q: RangeQuery, clamp: bool = False) -> float:
    """Sum over the support of ``coefficient * <q, atom>``; ``O(k d)``."""
    q.check_within(sk.domain)
    return float(estimate_many_sketch(sk, [q], clamp=clamp)[0])


def estimate_many_sketch(
    sk: WaveletSketch, queries: Sequence[RangeQuery], clamp: bool = False
) -> np.ndarray:
    lows, highs = query_arrays(queries, sk.domain.dims)
    _check_arrays_within(lows, highs, sk.domain)
    est = np.zeros(len(lows))
    if sk.support_size == 0:
        return est
    step = max(1, 2**22 // sk.support_size)
    for start in range(0, len(lows), step):
        sl = slice(start, start + step)
        est[sl] = haar.range_basis_dot(lows[sl], highs[sl], sk.indices, sk.padded) @ sk.values
    return np.maximum(est, 0.0) if clamp else est
