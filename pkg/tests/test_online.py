import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from histlearn.core import AttributeDomain, QueryFeedbackRecord, RangeQuery
from histlearn.equihist import EquiLayout, fit_equihist
from histlearn.online import (
    FrozenSupportState,
    NoDataError,
    OnlineState,
    UpdateEvent,
    online_histogram,
    online_new,
    online_observe,
    simulate_stream,
)
from histlearn.sphist import OmpOptions, run_omp
from histlearn.workload import (
    QueryModelSpec,
    gen_gaussian_mixture,
    gen_queries,
    label_queries,
    preset_mixture,
)

D4 = AttributeDomain((4,))


def qfr(lo, hi, s):
    return QueryFeedbackRecord(RangeQuery(((lo, hi),)), s)


EXAMPLE = [qfr(1, 2, 2), qfr(3, 4, 6), qfr(1, 4, 8)]


@pytest.fixture(scope="module")
def data():
    freq = gen_gaussian_mixture(preset_mixture("type1", 512, 50_000, seed=1), seed=2)
    qfrs = label_queries(freq, gen_queries(QueryModelSpec("uniform", 400, 0.2, seed=3), freq))
    return freq, qfrs


class TestState:
    def test_new(self):
        s = online_new(EquiLayout(D4, (2,)), 0.0, 1.0)
        assert s.t == 0 and not s.gram.any() and not s.rhs.any()
        with pytest.raises(ValueError):
            online_new(EquiLayout(D4, (2,)), 0.0, 0.0)
        with pytest.raises(ValueError):
            online_new(EquiLayout(D4, (2,)), -1.0, 1.0)

    def test_scalar_layout(self):
        s = online_new(EquiLayout(D4, (1,)))
        online_observe(s, qfr(1, 4, 100))
        assert s.gram.shape == (1, 1)
        assert online_histogram(s).counts[0] == pytest.approx(100.0)

    def test_hand_example(self):
        s = online_new(EquiLayout(D4, (2,)))
        for r in EXAMPLE:
            online_observe(s, r)
        np.testing.assert_allclose(s.solve(), [1.0, 3.0], atol=1e-12)
        h = online_histogram(s)
        np.testing.assert_allclose(h.counts, [2.0, 6.0], atol=1e-12)

    def test_no_data(self):
        with pytest.raises(NoDataError):
            online_histogram(online_new(EquiLayout(D4, (2,))))

    def test_duplicate_doubles(self):
        a = online_new(EquiLayout(D4, (2,)))
        online_observe(a, EXAMPLE[0])
        g1, c1 = a.gram.copy(), a.rhs.copy()
        online_observe(a, EXAMPLE[0])
        np.testing.assert_allclose(a.gram, 2 * g1)
        np.testing.assert_allclose(a.rhs, 2 * c1)

    def test_decay_halves(self):
        s = online_new(EquiLayout(D4, (2,)), 0.0, 0.5)
        online_observe(s, EXAMPLE[0])
        x0 = np.outer([2, 0], [2, 0])
        np.testing.assert_allclose(s.gram, x0)
        online_observe(s, EXAMPLE[1])
        online_observe(s, EXAMPLE[1])
        x1 = np.outer([0, 2], [0, 2])
        np.testing.assert_allclose(s.gram, 0.25 * x0 + 1.5 * x1)
        assert s.weight == pytest.approx(0.25 + 0.5 + 1)

    def test_large_ridge_shrinks(self):
        s = online_new(EquiLayout(D4, (2,)), 1e12)
        for r in EXAMPLE:
            online_observe(s, r)
        assert np.abs(online_histogram(s).counts).max() < 1e-6

    def test_rejects_out_of_domain(self):
        with pytest.raises(ValueError):
            online_observe(online_new(EquiLayout(D4, (2,))), qfr(1, 5, 1))


class TestBatchEquivalence:
    @pytest.mark.parametrize("ridge", [0.0, 0.5])
    def test_matches_batch(self, data, ridge):
        freq, qfrs = data
        layout = EquiLayout(freq.domain, (20,))
        s = online_new(layout, ridge, 1.0)
        for t, r in enumerate(qfrs, start=1):
            online_observe(s, r)
            if t in (30, 100, 400):
                batch, _ = fit_equihist(qfrs[:t], layout, ridge)
                assert np.abs(s.solve() - batch.weights).max() <= 1e-6

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), decay=st.floats(0.5, 1.0))
    def test_gram_stays_psd(self, seed, decay):
        rng = np.random.default_rng(seed)
        dom = AttributeDomain((30,))
        s = OnlineState(EquiLayout(dom, (6,)), 0.0, decay)
        for _ in range(40):
            a, b = sorted(rng.integers(1, 31, 2))
            s.observe(qfr(int(a), int(b), float(rng.integers(0, 50))))
        np.testing.assert_allclose(s.gram, s.gram.T)
        assert np.linalg.eigvalsh(s.gram).min() >= -1e-9 * max(1.0, np.trace(s.gram))

    def test_unit_decay_is_plain_sum(self, data):
        freq, qfrs = data
        layout = EquiLayout(freq.domain, (10,))
        s = online_new(layout)
        for r in qfrs[:50]:
            online_observe(s, r)
        x = np.array([layout.overlap_matrix(*_arrays(r))[0] for r in qfrs[:50]])
        np.testing.assert_allclose(s.gram, x.T @ x)


def _arrays(r):
    lo = np.array([[b[0] for b in r.query.bounds]])
    hi = np.array([[b[1] for b in r.query.bounds]])
    return lo, hi


def test_update_cost_flat():
    dom = AttributeDomain((1024,))
    s = online_new(EquiLayout(dom, (20,)))
    rng = np.random.default_rng(0)
    lows = rng.integers(1, 900, 4000)
    stream = [qfr(int(a), int(a) + 100, 50.0) for a in lows]
    times = []
    for r in stream:
        t0 = time.perf_counter()
        s.observe(r)
        times.append(time.perf_counter() - t0)
    early, late = np.median(times[:1000]), np.median(times[-1000:])
    assert late < 3 * early


class TestFrozenSupport:
    def test_matches_omp_refit(self, data):
        freq, qfrs = data
        res = run_omp(qfrs, freq.domain, OmpOptions(15))
        state = FrozenSupportState(freq.domain, res.support)
        for r in qfrs:
            state.observe(r)
        sk = state.sketch()
        ref = dict(res.sketch.entries())
        for i, v in sk.entries():
            assert v == pytest.approx(ref[i], rel=1e-6, abs=1e-6)

    def test_no_data(self):
        with pytest.raises(NoDataError):
            FrozenSupportState(D4, [1]).sketch()


class TestSimulateStream:
    def _setup(self, data, n_stream=300, n_test=300):
        freq, _ = data
        stream = gen_queries(QueryModelSpec("uniform", n_stream, 0.2, seed=7), freq)
        test = gen_queries(QueryModelSpec("uniform", n_test, 0.2, seed=8), freq)
        return freq, stream, test

    def test_consistent_stream_converges(self, data):
        freq, stream, test = self._setup(data)
        state = online_new(EquiLayout(freq.domain, (20,)))
        traj = simulate_stream(freq, stream, test, state, eval_every=25)
        errs = np.array([e for _, e in traj])
        assert errs[-1] < errs[0]
        # non-increasing within noise once the system is determined
        assert np.all(np.diff(errs[2:]) <= 0.5)

    def test_spike_after_update(self, data):
        freq, stream, test = self._setup(data, n_stream=600)
        state = online_new(EquiLayout(freq.domain, (20,)), 0.0, 0.98)
        event = UpdateEvent(300, 0.3, seed=1)
        traj = dict(simulate_stream(freq, stream, test, state, eval_every=50, events=[event]))
        assert 301 in traj
        assert traj[301] > traj[300]
        assert traj[600] < traj[301]

    def test_single_final_measurement(self, data):
        freq, stream, test = self._setup(data, n_stream=40)
        traj = simulate_stream(freq, stream, test, online_new(EquiLayout(freq.domain, (5,))), 100)
        assert [s for s, _ in traj] == [40]

    def test_validation(self, data):
        freq, stream, test = self._setup(data, n_stream=5)
        state = online_new(EquiLayout(freq.domain, (5,)))
        with pytest.raises(ValueError):
            simulate_stream(freq, [], test, state)
        with pytest.raises(ValueError):
            simulate_stream(freq, stream, test, state, eval_every=0)
