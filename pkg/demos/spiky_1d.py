"""Learn two 20-bucket histograms of a spiky 1-D column from query feedback.

The column mixes five narrow Gaussians over 1024 values.  An optimizer
that only sees (query, true row count) pairs has to learn where the mass
sits.  Equi-width buckets smear every spike across a wide bucket; the
sparse wavelet learner places its buckets around the spikes.

Run with ``python3 demos/spiky_1d.py``.
"""

import numpy as np

from histlearn import (
    EquiLayout,
    QueryModelSpec,
    avg_rel_error,
    estimate_many_hist,
    exact_cardinalities,
    fit_equihist,
    fit_sphist,
    gen_gaussian_mixture,
    gen_queries,
    label_queries,
    preset_mixture,
)

freq = gen_gaussian_mixture(preset_mixture("type2", 1024, 100_000, seed=3), seed=4)
print(f"{freq.total} records, {np.count_nonzero(freq.counts)} of 1024 values occupied")

# feedback from 700 executed queries whose centers follow the data
train = label_queries(freq, gen_queries(QueryModelSpec("data-dependent", 700, 0.2, seed=5), freq))
test = gen_queries(QueryModelSpec("data-dependent", 5000, 0.2, seed=6), freq)
truth = exact_cardinalities(freq, test)

_, equi = fit_equihist(train, EquiLayout(freq.domain, (20,)))
_, sparse = fit_sphist(train, freq.domain, 20)

for name, hist in (("equi-width", equi), ("sparse wavelet", sparse)):
    err = avg_rel_error(truth, estimate_many_hist(hist, test, clamp=True))
    print(f"{name:>15}: {len(hist)} buckets, test error {err:5.2f}%")

print("\nsparse buckets holding the most mass:")
order = np.argsort(sparse.counts)[::-1][:5]
for i in sorted(order):
    print(f"  [{sparse.lows[i, 0]:4d}, {sparse.highs[i, 0]:4d}]  {sparse.counts[i]:9.0f} rows")
