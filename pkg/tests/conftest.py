import numpy as np
import pytest
from hypothesis import strategies as st

from histlearn import AttributeDomain, BucketHistogram, RangeQuery


def random_query(rng, domain):
    bounds = []
    for r in domain.ranges:
        a, b = sorted(rng.integers(1, r + 1, size=2).tolist())
        bounds.append((a, b))
    return RangeQuery(tuple(bounds))


def random_partition(rng, domain, splits):
    """Guillotine partition built by repeatedly cutting a random box."""
    boxes = [(np.ones(domain.dims, dtype=np.int64), np.asarray(domain.ranges))]
    for _ in range(splits):
        i = int(rng.integers(len(boxes)))
        lo, hi = boxes[i]
        axes = np.flatnonzero(hi > lo)
        if axes.size == 0:
            continue
        ax = int(rng.choice(axes))
        cut = int(rng.integers(lo[ax], hi[ax]))
        hi1, lo2 = hi.copy(), lo.copy()
        hi1[ax], lo2[ax] = cut, cut + 1
        boxes[i] = (lo, hi1)
        boxes.append((lo2, hi))
    lows = np.array([b[0] for b in boxes])
    highs = np.array([b[1] for b in boxes])
    counts = rng.normal(size=len(boxes)) * 50
    return BucketHistogram(domain, lows, highs, counts)


@st.composite
def domains(draw, max_dims=3, max_range=12):
    d = draw(st.integers(1, max_dims))
    return AttributeDomain(tuple(draw(st.integers(1, max_range)) for _ in range(d)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
