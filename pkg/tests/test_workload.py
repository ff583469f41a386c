import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from histlearn.core import AttributeDomain, DomainError, FrequencyTensor, RangeQuery, unary_query
from histlearn.workload import (
    MixtureComponent,
    MixtureSpec,
    QueryModelSpec,
    RecordParseError,
    gen_gaussian_mixture,
    gen_queries,
    gen_query_arrays,
    ingest_records_csv,
    label_queries,
    perturb,
    preset_mixture,
    sample_centers,
)


class TestMixture:
    def test_degenerate_component(self):
        spec = MixtureSpec((4,), (MixtureComponent((2.0,), 1e-6),), records=10)
        np.testing.assert_array_equal(gen_gaussian_mixture(spec, seed=0).counts, [0, 10, 0, 0])

    def test_type1_preset(self):
        spec = preset_mixture("type1", 1024, 100_000, seed=7)
        assert len(spec.components) == 17
        assert all(c.variance == 625 for c in spec.components)
        freq = gen_gaussian_mixture(spec, seed=7)
        assert freq.total == 100_000
        for c in spec.components:
            m = int(np.clip(round(c.mean[0]), 1, 1024))
            window = freq.counts[max(0, m - 26) : m + 25]
            assert window.sum() > 0

    def test_presets(self):
        assert len(preset_mixture("type2", 1024).components) == 5
        assert preset_mixture("type2", 1024).components[0].variance == 100
        two = preset_mixture("gauss-nd", (32, 32))
        assert (len(two.components), two.components[0].variance) == (9, 100)
        three = preset_mixture("gauss-nd", (32, 32, 32))
        assert (len(three.components), three.components[0].variance) == (5, 25)
        with pytest.raises(ValueError):
            preset_mixture("zipf", 64)

    def test_means_within_range(self):
        spec = preset_mixture("type1", 500, seed=3)
        means = np.array([c.mean for c in spec.components])
        assert means.min() >= 0 and means.max() <= 500

    def test_determinism(self):
        spec = preset_mixture("gauss-nd", (16, 16), 5000, seed=1)
        a = gen_gaussian_mixture(spec, seed=9).counts
        b = gen_gaussian_mixture(spec, seed=9).counts
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, gen_gaussian_mixture(spec, seed=10).counts)

    @settings(max_examples=30, deadline=None)
    @given(m=st.integers(1, 5000), seed=st.integers(0, 2**31), d=st.integers(1, 3))
    def test_mass_conserved(self, m, seed, d):
        spec = preset_mixture("gauss-nd", (8,) * d, m, seed=seed)
        assert gen_gaussian_mixture(spec, seed=seed).total == m

    def test_resample_keeps_border_light(self):
        clamp = preset_mixture("gauss-nd", (32, 32), 50_000, seed=0)
        redraw = preset_mixture("gauss-nd", (32, 32), 50_000, seed=0, boundary="resample")
        a = gen_gaussian_mixture(clamp, seed=1).counts
        b = gen_gaussian_mixture(redraw, seed=1).counts
        assert b.sum() == 50_000

        def border(c):
            inner = c[1:-1, 1:-1].sum()
            return c.sum() - inner

        assert border(b) < border(a)
        with pytest.raises(ValueError):
            MixtureSpec((4,), (MixtureComponent((1.0,), 1.0),), boundary="wrap")

    def test_spec_validation(self):
        for bad in (MixtureComponent((1.0,), 0.0), MixtureComponent((1.0,), 1.0, weight=0),
                    MixtureComponent((1.0, 2.0), 1.0)):
            with pytest.raises(ValueError):
                MixtureSpec((4,), (bad,))
        with pytest.raises(ValueError):
            MixtureSpec((4,), (MixtureComponent((1.0,), 1.0),), records=0)


@pytest.fixture(scope="module")
def freq2d():
    return gen_gaussian_mixture(preset_mixture("gauss-nd", (32, 32), 20_000, seed=1), seed=2)


class TestQueries:
    def test_uniform_width_cap(self):
        freq = FrequencyTensor.zeros(AttributeDomain((100,)))
        qs = gen_queries(QueryModelSpec("uniform", 2000, 0.2, seed=5), freq)
        assert max(q.volume for q in qs) <= 20

    def test_point_mass_centers(self):
        counts = np.zeros(100, dtype=np.int64)
        counts[49] = 7
        freq = FrequencyTensor(AttributeDomain((100,)), counts)
        centers = sample_centers("data-dependent", freq, 500, np.random.default_rng(0))
        assert np.all(centers == 50)
        for q in gen_queries(QueryModelSpec("data-dependent", 500, 0.2, seed=1), freq):
            lo, hi = q.bounds[0]
            assert lo <= 50 <= hi

    def test_area_cap_2d(self, freq2d):
        for model in ("uniform", "data-dependent"):
            qs = gen_queries(QueryModelSpec(model, 5000, 0.2, seed=3), freq2d)
            assert max(q.volume for q in qs) <= 204

    @pytest.mark.parametrize("model", ["uniform", "data-dependent"])
    @pytest.mark.parametrize("ranges", [(1024,), (32, 32), (32, 32, 32), (7, 300)])
    def test_fuzz_cap_and_containment(self, model, ranges):
        spec = preset_mixture("gauss-nd", ranges, 5000, seed=0)
        freq = gen_gaussian_mixture(spec, seed=0)
        lows, highs = gen_query_arrays(QueryModelSpec(model, 10_000, 0.2, seed=11), freq)
        assert lows.min() >= 1 and np.all(highs <= np.asarray(ranges)) and np.all(lows <= highs)
        vol = np.prod(highs - lows + 1, axis=1)
        assert vol.max() <= 0.2 * np.prod(ranges)

    def test_data_dependent_needs_data(self):
        freq = FrequencyTensor.zeros(AttributeDomain((10,)))
        with pytest.raises(ValueError):
            gen_queries(QueryModelSpec("data-dependent", 5, 0.2, 0), freq)

    def test_determinism(self, freq2d):
        m = QueryModelSpec("data-dependent", 300, 0.2, seed=4)
        assert gen_queries(m, freq2d) == gen_queries(m, freq2d)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            QueryModelSpec("zipf")
        with pytest.raises(ValueError):
            QueryModelSpec(count=0)
        with pytest.raises(ValueError):
            QueryModelSpec(max_volume_fraction=0.0)


class TestLabel:
    def test_examples(self):
        freq = FrequencyTensor(AttributeDomain((4,)), [1, 1, 3, 3])
        qfrs = label_queries(freq, [RangeQuery(((1, 2),)), RangeQuery(((3, 4),))])
        assert [r.cardinality for r in qfrs] == [2, 6]
        assert label_queries(freq, []) == []
        assert label_queries(freq, [RangeQuery(((1, 4),))])[0].cardinality == freq.total

    def test_brute_force(self, freq2d):
        qs = gen_queries(QueryModelSpec("uniform", 200, 0.2, seed=8), freq2d)
        for r in label_queries(freq2d, qs):
            assert r.cardinality == int((unary_query(r.query, freq2d.domain) * freq2d.counts).sum())


class TestPerturb:
    def test_moves_mass(self, freq2d):
        out = perturb(freq2d, 0.3, seed=1)
        assert out.total == freq2d.total
        moved = np.clip(freq2d.counts - out.counts, 0, None).sum()
        assert 0 < moved <= round(0.3 * freq2d.total)
        np.testing.assert_array_equal(out.counts, perturb(freq2d, 0.3, seed=1).counts)

    def test_zero_fraction(self, freq2d):
        assert perturb(freq2d, 0.0) is freq2d
        with pytest.raises(ValueError):
            perturb(freq2d, 1.5)


class TestIngest:
    def test_examples(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("2\n2\n3\n")
        np.testing.assert_array_equal(ingest_records_csv(p, AttributeDomain((4,))).counts, [0, 2, 1, 0])
        p.write_text("")
        assert ingest_records_csv(p, AttributeDomain((4,))).total == 0
        p.write_text("1,1\n2,2\n")
        np.testing.assert_array_equal(
            ingest_records_csv(p, AttributeDomain((2, 2))).counts, [[1, 0], [0, 1]]
        )

    def test_zero_based(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("0\n3\n")
        np.testing.assert_array_equal(
            ingest_records_csv(p, AttributeDomain((4,)), zero_based=True).counts, [1, 0, 0, 1]
        )

    def test_errors_carry_line_numbers(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1\n# note\nx\n")
        with pytest.raises(RecordParseError, match="line 3"):
            ingest_records_csv(p, AttributeDomain((4,)))
        p.write_text("1\n1,2\n")
        with pytest.raises(RecordParseError, match="line 2"):
            ingest_records_csv(p, AttributeDomain((4,)))
        p.write_text("1\n9\n")
        with pytest.raises(DomainError, match="line 2"):
            ingest_records_csv(p, AttributeDomain((4,)))
