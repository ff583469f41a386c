"""Synthetic datasets, range-query generators and QFR labeling.

All randomness comes from ``numpy.random.Generator`` seeded through
``numpy.random.default_rng(seed)``, i.e. the PCG64 bit generator with
NumPy's SeedSequence seeding.  PCG64 output is defined bit-for-bit and is
platform independent, so a given ``(spec, seed)`` reproduces the same
tensor and queries on any machine running the same NumPy major version.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    AttributeDomain,
    DomainError,
    FrequencyTensor,
    QueryFeedbackRecord,
    RangeQuery,
    exact_cardinalities,
)

PRESETS = ("type1", "type2", "gauss-nd", "custom")
QUERY_MODELS = ("uniform", "data-dependent")
BOUNDARY_MODES = ("clamp", "resample")
DEFAULT_RECORDS = 100_000


class RecordParseError(ValueError):
    """A records file row could not be parsed."""


@dataclass(frozen=True)
class MixtureComponent:
    mean: tuple[float, ...]
    variance: float
    weight: float = 1.0


@dataclass(frozen=True)
class MixtureSpec:
    """Mixture of spherical Gaussians sampled onto an integer grid."""

    ranges: tuple[int, ...]
    components: tuple[MixtureComponent, ...]
    records: int = DEFAULT_RECORDS
    preset: str = "custom"
    boundary: str = "clamp"

    def __post_init__(self):
        object.__setattr__(self, "ranges", tuple(int(r) for r in self.ranges))
        object.__setattr__(self, "components", tuple(self.components))
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if self.records < 1:
            raise ValueError("records must be >= 1")
        if not self.components:
            raise ValueError("mixture needs at least one component")
        for c in self.components:
            if c.weight <= 0:
                raise ValueError("component weights must be positive")
            if c.variance <= 0:
                raise ValueError("component variance must be positive")
            if len(c.mean) != len(self.ranges):
                raise ValueError("component mean dimensionality mismatch")

    @property
    def dims(self) -> int:
        return len(self.ranges)

    @property
    def domain(self) -> AttributeDomain:
        return AttributeDomain(self.ranges)


# (components, variance) per preset; gauss-nd depends on dimensionality
_PRESET_SHAPE = {
    "type1": (17, 625.0),
    "type2": (5, 100.0),
}


def preset_mixture(
    preset: str,
    ranges: Sequence[int] | int,
    records: int = DEFAULT_RECORDS,
    seed: int = 0,
    boundary: str = "clamp",
) -> MixtureSpec:
    """Build a preset mixture with means drawn uniformly from ``[0, r]``.

    ``type1``: 17 components, variance 625 (1-D).
    ``type2``: 5 components, variance 100, a spiky 1-D distribution.
    ``gauss-nd``: 9 components with variance 100 in 2-D, otherwise 5
    components with variance 25.
    """
    if isinstance(ranges, (int, np.integer)):
        ranges = (int(ranges),)
    ranges = tuple(int(r) for r in ranges)
    if preset in _PRESET_SHAPE:
        n_comp, var = _PRESET_SHAPE[preset]
    elif preset == "gauss-nd":
        n_comp, var = (9, 100.0) if len(ranges) == 2 else (5, 25.0)
    else:
        raise ValueError(f"{preset!r} is not a generated preset")
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 1.0, size=(n_comp, len(ranges))) * np.asarray(ranges)
    comps = tuple(MixtureComponent(tuple(m.tolist()), var) for m in means)
    return MixtureSpec(ranges, comps, records, preset, boundary)


def gen_gaussian_mixture(spec: MixtureSpec, seed: int = 0) -> FrequencyTensor:
    """Sample ``spec.records`` points and count them per grid cell.

    Samples are rounded to the nearest integer and clamped to ``[1, r_i]``.
    With ``spec.boundary == "resample"`` a sample whose rounded cell falls
    outside the grid is instead redrawn from its own component, which
    avoids piling mass on border cells when ``sigma`` is large relative to
    ``r``.
    """
    rng = np.random.default_rng(seed)
    weights = np.array([c.weight for c in spec.components], dtype=float)
    weights /= weights.sum()
    means = np.array([c.mean for c in spec.components], dtype=float)
    sigmas = np.sqrt([c.variance for c in spec.components])
    which = rng.choice(len(weights), size=spec.records, p=weights)
    hi = np.asarray(spec.ranges)
    pts = means[which] + rng.standard_normal((spec.records, spec.dims)) * sigmas[which, None]
    cells = np.rint(pts).astype(np.int64)
    if spec.boundary == "resample":
        bad = np.flatnonzero(((cells < 1) | (cells > hi)).any(axis=1))
        for _ in range(10_000):
            if bad.size == 0:
                break
            w = which[bad]
            redraw = means[w] + rng.standard_normal((bad.size, spec.dims)) * sigmas[w, None]
            cells[bad] = np.rint(redraw).astype(np.int64)
            bad = bad[((cells[bad] < 1) | (cells[bad] > hi)).any(axis=1)]
    cells = np.clip(cells, 1, hi)
    flat = np.ravel_multi_index(tuple((cells - 1).T), spec.ranges)
    counts = np.bincount(flat, minlength=math.prod(spec.ranges)).reshape(spec.ranges)
    return FrequencyTensor(spec.domain, counts)


@dataclass(frozen=True)
class QueryModelSpec:
    model: str = "uniform"
    count: int = 100
    max_volume_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.model not in QUERY_MODELS:
            raise ValueError(f"unknown query model {self.model!r}")
        if self.count < 1:
            raise ValueError("query count must be >= 1")
        if not 0 < self.max_volume_fraction <= 1:
            raise ValueError("max_volume_fraction must lie in (0, 1]")


def max_widths(ranges: Sequence[int], fraction: float) -> np.ndarray:
    """Largest per-dimension width keeping every box under the volume cap."""
    d = len(ranges)
    w = np.floor(fraction ** (1.0 / d) * np.asarray(ranges, dtype=float) + 1e-9)
    return np.maximum(w.astype(np.int64), 1)


def sample_centers(model: str, freq: FrequencyTensor, n: int, rng) -> np.ndarray:
    """``(n, d)`` 1-based query centers under the given model."""
    ranges = np.asarray(freq.domain.ranges)
    if model == "uniform":
        return rng.integers(1, ranges + 1, size=(n, len(ranges)))
    total = freq.total
    if total <= 0:
        raise ValueError("data-dependent queries need a non-empty dataset")
    p = freq.counts.ravel() / total
    flat = rng.choice(p.size, size=n, p=p)
    return np.stack(np.unravel_index(flat, freq.domain.shape), axis=1) + 1


def gen_query_arrays(model: QueryModelSpec, freq: FrequencyTensor):
    """Vectorized generator returning ``(lows, highs)`` arrays."""
    rng = np.random.default_rng(model.seed)
    ranges = np.asarray(freq.domain.ranges)
    centers = sample_centers(model.model, freq, model.count, rng)
    wmax = max_widths(freq.domain.ranges, model.max_volume_fraction)
    widths = rng.integers(1, wmax + 1, size=centers.shape)
    lows = centers - (widths - 1) // 2
    highs = lows + widths - 1
    return np.clip(lows, 1, ranges), np.clip(highs, 1, ranges)


def gen_queries(model: QueryModelSpec, freq: FrequencyTensor) -> list[RangeQuery]:
    """Draw ``model.count`` range queries around sampled centers.

    Each dimension gets an integer width drawn uniformly from
    ``[1, floor(f**(1/d) * r_i)]`` and is centred on the sampled cell, so
    the box volume never exceeds ``f`` of the domain.  Boxes are clipped
    to the domain, which can only shrink them.
    """
    lows, highs = gen_query_arrays(model, freq)
    return [
        RangeQuery(tuple(zip(lo.tolist(), hi.tolist()))) for lo, hi in zip(lows, highs)
    ]


def label_queries(
    freq: FrequencyTensor, queries: Sequence[RangeQuery]
) -> list[QueryFeedbackRecord]:
    """Attach exact cardinalities, standing in for executor feedback."""
    if not queries:
        return []
    s = exact_cardinalities(freq, queries)
    return [QueryFeedbackRecord(q, int(c)) for q, c in zip(queries, s)]


def perturb(freq: FrequencyTensor, fraction: float, seed: int = 0) -> FrequencyTensor:
    """Move ``round(fraction * M)`` randomly chosen records to uniform cells."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    counts = freq.counts.ravel().copy()
    n_move = int(round(fraction * freq.total))
    if n_move == 0:
        return freq
    # pick records without replacement, grouped by cell
    removed = rng.multivariate_hypergeometric(counts, n_move)
    counts -= removed
    dest = rng.integers(0, counts.size, size=n_move)
    counts += np.bincount(dest, minlength=counts.size)
    return FrequencyTensor(freq.domain, counts.reshape(freq.domain.shape))


def ingest_records_csv(
    path, domain: AttributeDomain, zero_based: bool = False
) -> FrequencyTensor:
    """Count records from a plain CSV file with ``d`` integer columns per row.

    Blank lines and lines starting with ``#`` are skipped.  With
    ``zero_based`` the values are shifted by one before the domain check.
    """
    counts = np.zeros(domain.shape, dtype=np.int64)
    shift = 1 if zero_based else 0
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != domain.dims:
                raise RecordParseError(
                    f"line {lineno}: expected {domain.dims} values, got {len(row)}"
                )
            try:
                cell = [int(v) + shift for v in row]
            except ValueError as exc:
                raise RecordParseError(f"line {lineno}: {exc}") from None
            for v, r in zip(cell, domain.ranges):
                if not 1 <= v <= r:
                    raise DomainError(f"line {lineno}: value {v} outside [1, {r}]")
            counts[tuple(v - 1 for v in cell)] += 1
    return FrequencyTensor(domain, counts)
