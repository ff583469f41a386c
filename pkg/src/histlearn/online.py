"""Streaming maintenance of equi-width histograms.

Follow-the-regularized-leader with squared loss keeps two sufficient
statistics, ``G = sum x x^T`` and ``c = sum x s``; each new QFR costs one
rank-one update, ``O(b^2)`` regardless of how many QFRs came before.
Recency is handled by an exponential decay ``gamma`` applied to the
statistics before each update, so an observation's weight shrinks by
``gamma`` per later observation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import haar
from .core import (
    AttributeDomain,
    BucketHistogram,
    FrequencyTensor,
    QueryFeedbackRecord,
    RangeQuery,
    WaveletSketch,
    box_sums,
    estimate_many_hist,
    query_arrays,
)
from .equihist import EquiLayout, solve_normal_equations
from .metrics import avg_rel_error
from .workload import perturb


class NoDataError(RuntimeError):
    """The online state has not observed any QFR yet."""


@dataclass
class OnlineState:
    """Decayed normal-equation accumulators for a fixed feature map.

    ``ridge=None`` selects the scale-free ``1e-8 * trace(G) / b`` at solve
    time.  ``weight`` is the decayed observation count used to normalise
    ``G`` and ``c``; with ``decay=1`` it equals ``t``.
    """

    layout: EquiLayout
    ridge: float | None = 0.0
    decay: float = 1.0
    gram: np.ndarray = field(init=False, repr=False)
    rhs: np.ndarray = field(init=False, repr=False)
    t: int = field(init=False, default=0)
    weight: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        b = self.layout.size
        self.gram = np.zeros((b, b))
        self.rhs = np.zeros(b)

    @property
    def size(self) -> int:
        return self.layout.size

    def features(self, q: RangeQuery) -> np.ndarray:
        lows, highs = query_arrays([q], self.layout.domain.dims)
        return self.layout.overlap_matrix(lows, highs)[0]

    def observe(self, qfr: QueryFeedbackRecord) -> "OnlineState":
        qfr.query.check_within(self.layout.domain)
        x = self.features(qfr.query)
        if self.decay != 1.0:
            self.gram *= self.decay
            self.rhs *= self.decay
        # symmetric rank-one update
        self.gram += np.outer(x, x)
        self.rhs += x * qfr.cardinality
        self.weight = self.decay * self.weight + 1.0
        self.t += 1
        return self

    def solve(self) -> np.ndarray:
        if self.t == 0:
            raise NoDataError("no QFR observed yet")
        w, *_ = solve_normal_equations(
            self.gram / self.weight, self.rhs / self.weight, self.ridge
        )
        return w

    def histogram(self) -> BucketHistogram:
        return self.layout.histogram(self.solve())


def online_new(layout: EquiLayout, ridge: float | None = 0.0, decay: float = 1.0) -> OnlineState:
    return OnlineState(layout, ridge, decay)


def online_observe(state: OnlineState, qfr: QueryFeedbackRecord) -> OnlineState:
    """Fold one QFR into ``state`` in place and return it."""
    return state.observe(qfr)


def online_histogram(state: OnlineState) -> BucketHistogram:
    """Current histogram ``B w`` from the regularised normal equations."""
    return state.histogram()


class FrozenSupportState:
    """Online least squares over a fixed set of Haar atoms.

    Between full re-selections the support stays fixed and only the
    coefficients are refreshed, using the same decayed accumulators as
    :class:`OnlineState`.
    """

    def __init__(self, domain: AttributeDomain, support: Sequence[int],
                 ridge: float | None = 0.0, decay: float = 1.0):
        if not 0 < decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        self.domain = domain
        self.support = np.asarray(sorted(support), dtype=np.int64)
        self.padded = haar.padded_ranges(domain.ranges)
        self.ridge = ridge
        self.decay = decay
        k = len(self.support)
        self.gram = np.zeros((k, k))
        self.rhs = np.zeros(k)
        self.t = 0
        self.weight = 0.0

    def observe(self, qfr: QueryFeedbackRecord) -> "FrozenSupportState":
        qfr.query.check_within(self.domain)
        lows, highs = query_arrays([qfr.query], self.domain.dims)
        x = haar.range_basis_dot(lows, highs, self.support, self.padded)[0]
        self.gram = self.decay * self.gram + np.outer(x, x)
        self.rhs = self.decay * self.rhs + x * qfr.cardinality
        self.weight = self.decay * self.weight + 1.0
        self.t += 1
        return self

    def sketch(self) -> WaveletSketch:
        if self.t == 0:
            raise NoDataError("no QFR observed yet")
        alpha, *_ = solve_normal_equations(
            self.gram / self.weight, self.rhs / self.weight, self.ridge
        )
        return WaveletSketch(self.domain, self.support, alpha)


@dataclass(frozen=True)
class UpdateEvent:
    """Perturb the ground truth once stream step ``after_step`` is done."""

    after_step: int
    fraction: float
    seed: int = 0


def simulate_stream(
    freq: FrequencyTensor,
    stream: Sequence[RangeQuery],
    test_queries: Sequence[RangeQuery],
    state: OnlineState,
    eval_every: int = 1,
    events: Iterable[UpdateEvent] = (),
) -> list[tuple[int, float]]:
    """Feed ``stream`` one query at a time and track test error.

    Each streamed query is labelled against the ground truth current at
    its step, so QFRs after an update event reflect the new data.  Test
    queries are relabelled whenever the truth changes.  Errors are
    measured after every ``eval_every``-th step, on the first step after
    each update event and after the final step.
    """
    if not stream or not test_queries:
        raise ValueError("stream and test set must be non-empty")
    if eval_every < 1:
        raise ValueError("eval_every must be >= 1")
    pending = sorted(events, key=lambda e: e.after_step)
    truth = freq
    dims = freq.domain.dims
    lows, highs = query_arrays(stream, dims)
    t_lows, t_highs = query_arrays(test_queries, dims)
    table = truth.prefix_sums()
    test_truth = box_sums(table, t_lows, t_highs)
    trajectory = []
    n = len(stream)
    just_updated = False
    for i, q in enumerate(stream):
        step = i + 1
        s = int(box_sums(table, lows[i : i + 1], highs[i : i + 1])[0])
        state.observe(QueryFeedbackRecord(q, s))
        if step % eval_every == 0 or step == n or just_updated:
            est = estimate_many_hist(state.histogram(), test_queries, clamp=True)
            trajectory.append((step, avg_rel_error(test_truth, est)))
        just_updated = False
        while pending and pending[0].after_step <= step:
            ev = pending.pop(0)
            truth = perturb(truth, ev.fraction, ev.seed)
            table = truth.prefix_sums()
            test_truth = box_sums(table, t_lows, t_highs)
            just_updated = True
    return trajectory
