"""CSV readers and writers for datasets, queries, QFRs, histograms and sketches.

Every file starts with one metadata comment such as
``# dims=2 domain=32,32`` followed by plain comma-separated rows.  Reals
are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from . import haar
from .core import (
    AttributeDomain,
    BucketHistogram,
    FrequencyTensor,
    QueryFeedbackRecord,
    RangeQuery,
    WaveletSketch,
)


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _join(values) -> str:
    return ",".join(str(int(v)) for v in values)


def format_meta(domain: AttributeDomain, **extra) -> str:
    parts = [f"dims={domain.dims}", f"domain={_join(domain.ranges)}"]
    parts += [f"{k}={v}" for k, v in extra.items()]
    return "# " + " ".join(parts)


def parse_meta(line: str, path="<input>") -> dict[str, str]:
    if not line.startswith("#"):
        raise FormatError(f"{path}:1: missing '# dims=... domain=...' metadata line")
    meta = {}
    for token in line[1:].split():
        key, sep, value = token.partition("=")
        if not sep:
            raise FormatError(f"{path}:1: bad metadata token {token!r}")
        meta[key] = value
    for key in ("dims", "domain"):
        if key not in meta:
            raise FormatError(f"{path}:1: metadata lacks {key}=")
    return meta


def _domain_from_meta(meta, path) -> AttributeDomain:
    try:
        ranges = tuple(int(v) for v in meta["domain"].split(","))
        dims = int(meta["dims"])
    except ValueError:
        raise FormatError(f"{path}:1: unreadable domain metadata") from None
    if len(ranges) != dims:
        raise FormatError(f"{path}:1: dims={dims} but domain lists {len(ranges)} ranges")
    return AttributeDomain(ranges)


def _read(path, n_cols, kinds):
    """Return ``(meta, domain, rows)`` with each cell parsed by ``kinds(domain)``."""
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\r\n")
        meta = parse_meta(first, path)
        domain = _domain_from_meta(meta, path)
        rows = []
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row or row[0].lstrip().startswith("#"):
                continue
            want = n_cols(domain)
            if len(row) != want:
                raise FormatError(f"{path}:{lineno}: expected {want} columns, got {len(row)}")
            try:
                rows.append([k(v) for k, v in zip(kinds(domain), row)])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return meta, domain, rows


def _write(path, header: str, rows) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


# datasets ---------------------------------------------------------------

def write_dataset(path, freq: FrequencyTensor) -> None:
    nz = np.argwhere(freq.counts > 0)
    rows = ([*map(str, (cell + 1).tolist()), str(int(freq.counts[tuple(cell)]))] for cell in nz)
    _write(path, format_meta(freq.domain, total=freq.total), rows)


def read_dataset(path) -> FrequencyTensor:
    meta, domain, rows = _read(path, lambda d: d.dims + 1, lambda d: [int] * (d.dims + 1))
    counts = np.zeros(domain.shape, dtype=np.int64)
    for row in rows:
        cell = tuple(v - 1 for v in row[:-1])
        if any(not 0 <= c < r for c, r in zip(cell, domain.ranges)):
            raise FormatError(f"{path}: cell {row[:-1]} outside the domain")
        counts[cell] += row[-1]
    freq = FrequencyTensor(domain, counts)
    if "total" in meta and int(meta["total"]) != freq.total:
        raise FormatError(f"{path}: total={meta['total']} but rows sum to {freq.total}")
    return freq


# queries and QFRs -------------------------------------------------------

def write_queries(path, domain: AttributeDomain, queries: Sequence[RangeQuery]) -> None:
    _write(path, format_meta(domain), ([str(v) for v in q.flat()] for q in queries))


def read_queries(path) -> tuple[AttributeDomain, list[RangeQuery]]:
    """Read a query file; QFR files are accepted too (cardinalities dropped)."""
    path = Path(path)
    with open(path, newline="") as fh:
        meta = parse_meta(fh.readline().rstrip("\r\n"), path)
        domain = _domain_from_meta(meta, path)
        first = next((r for r in csv.reader(fh) if r and not r[0].startswith("#")), None)
    if first is not None and len(first) == 2 * domain.dims + 1:
        _, qfrs = read_qfrs(path)
        return domain, [r.query for r in qfrs]
    _, domain, rows = _read(path, lambda d: 2 * d.dims, lambda d: [int] * (2 * d.dims))
    queries = [RangeQuery.from_flat(r) for r in rows]
    for q in queries:
        q.check_within(domain)
    return domain, queries


def write_qfrs(path, domain: AttributeDomain, qfrs: Sequence[QueryFeedbackRecord]) -> None:
    rows = ([*(str(v) for v in r.query.flat()), _fmt(r.cardinality)] for r in qfrs)
    _write(path, format_meta(domain), rows)


def read_qfrs(path) -> tuple[AttributeDomain, list[QueryFeedbackRecord]]:
    def kinds(d):
        return [int] * (2 * d.dims) + [float]

    _, domain, rows = _read(path, lambda d: 2 * d.dims + 1, kinds)
    out = []
    for r in rows:
        q = RangeQuery.from_flat(r[:-1])
        q.check_within(domain)
        out.append(QueryFeedbackRecord(q, r[-1]))
    return domain, out


# histograms and sketches ------------------------------------------------

def write_histogram(path, h: BucketHistogram) -> None:
    def rows():
        for lo, hi, c in zip(h.lows, h.highs, h.counts):
            flat = [v for pair in zip(lo.tolist(), hi.tolist()) for v in pair]
            yield [*map(str, flat), _fmt(float(c))]

    _write(path, format_meta(h.domain), rows())


def read_histogram(path) -> BucketHistogram:
    def kinds(d):
        return [int] * (2 * d.dims) + [float]

    _, domain, rows = _read(path, lambda d: 2 * d.dims + 1, kinds)
    if not rows:
        raise FormatError(f"{path}: histogram has no buckets")
    arr = np.asarray([r[:-1] for r in rows], dtype=np.int64)
    counts = [r[-1] for r in rows]
    return BucketHistogram(domain, arr[:, 0::2], arr[:, 1::2], counts)


def write_sketch(path, sk: WaveletSketch) -> None:
    header = format_meta(sk.domain, padded=_join(sk.padded))
    _write(path, header, ([str(i), _fmt(v)] for i, v in sk.entries()))


def read_sketch(path) -> WaveletSketch:
    meta, domain, rows = _read(path, lambda d: 2, lambda d: [int, float])
    padded = haar.padded_ranges(domain.ranges)
    if "padded" in meta and tuple(int(v) for v in meta["padded"].split(",")) != padded:
        raise FormatError(f"{path}: padded={meta['padded']} disagrees with domain")
    return WaveletSketch(domain, [r[0] for r in rows], [r[1] for r in rows])


def write_trajectory(path, trajectory) -> None:
    _write(path, "step,avg_rel_error", ([str(s), _fmt(e)] for s, e in trajectory))
