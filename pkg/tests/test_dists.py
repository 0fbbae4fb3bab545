"""Distribution layer: chi and F closed forms, truncated chi against a
rejection-sampling oracle, interval-union algebra, normal streams."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from cepa.dists import (
    IntervalUnion,
    chi_cdf,
    chi_log_survival,
    chi_survival,
    f_survival,
    standard_normal_stream,
    truncated_chi_survival,
)
from cepa.exceptions import NumericalError


class TestChiCdf:
    def test_zero(self):
        assert chi_cdf(0.0, 3) == 0.0

    def test_chi2_closed_form(self):
        x = math.sqrt(2 * math.log(2))
        assert chi_cdf(x, 2) == pytest.approx(0.5, abs=1e-12)
        for x in (0.3, 1.0, 2.5):
            assert chi_cdf(x, 2) == pytest.approx(1 - math.exp(-x * x / 2), abs=1e-12)

    def test_chi1_closed_form(self):
        assert chi_cdf(1.959964, 1) == pytest.approx(0.95, abs=1e-6)
        # exact via erf: chi_1 cdf = 2 Phi(x) - 1
        for x in (0.5, 1.0, 3.0):
            assert chi_cdf(x, 1) == pytest.approx(math.erf(x / math.sqrt(2)), abs=1e-12)

    def test_monotone_and_limit(self):
        xs = np.linspace(0, 10, 200)
        vals = [chi_cdf(x, 4) for x in xs]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert chi_cdf(math.inf, 4) == 1.0

    def test_rejects_bad_dof(self):
        with pytest.raises(ValueError):
            chi_cdf(1.0, 0)

    def test_survival_complement(self):
        for p in (1, 2, 5):
            for x in (0.2, 1.7, 4.0):
                assert chi_survival(x, p) == pytest.approx(1 - chi_cdf(x, p), abs=1e-12)


class TestTruncatedChi:
    def test_no_truncation_equals_survival(self):
        t = IntervalUnion.from_pairs([(0.0, math.inf)])
        for p in (1, 2, 3):
            for x in (0.5, 1.5, 3.0):
                assert truncated_chi_survival(x, p, t) == pytest.approx(
                    1 - chi_cdf(x, p), abs=1e-12)

    def test_at_lower_endpoint_is_one(self):
        t = IntervalUnion.from_pairs([(1.2, 2.5)])
        assert truncated_chi_survival(1.2, 3, t) == 1.0

    def test_above_supremum_is_zero(self):
        t = IntervalUnion.from_pairs([(1.0, 2.0)])
        assert truncated_chi_survival(2.5, 3, t) == 0.0

    def test_empty_set_rejected(self):
        with pytest.raises(NumericalError):
            truncated_chi_survival(1.0, 1, IntervalUnion())

    def test_rejection_sampling_oracle(self):
        # p = 1, T = [1,2] u [3, inf), x = 3: exact mass ratio checked
        # against 1e7 half-normal draws within 3 MC standard errors.
        t = IntervalUnion.from_pairs([(1.0, 2.0), (3.0, math.inf)])
        got = truncated_chi_survival(3.0, 1, t)
        rng = np.random.default_rng(20240817)
        draws = np.abs(rng.standard_normal(10_000_000))
        in_set = ((draws >= 1.0) & (draws <= 2.0)) | (draws >= 3.0)
        above = draws >= 3.0
        n_set = in_set.sum()
        p_hat = above.sum() / n_set
        se = math.sqrt(p_hat * (1 - p_hat) / n_set)
        assert abs(got - p_hat) <= 3 * se

    def test_split_vs_signed_cdf_single_pass(self):
        # Same quantity from a single pass of signed CDF differences.
        rng = np.random.default_rng(5)
        for _ in range(50):
            edges = np.sort(rng.uniform(0, 6, size=4))
            t = IntervalUnion.from_pairs([(edges[0], edges[1]), (edges[2], edges[3])])
            x = rng.uniform(0, 6.5)
            p = int(rng.integers(1, 4))
            den = sum(chi_cdf(hi, p) - chi_cdf(lo, p) for lo, hi in t.intervals)
            num = sum(
                chi_cdf(hi, p) - chi_cdf(max(lo, x), p)
                for lo, hi in t.intervals if hi >= x
            )
            if den < 1e-12:
                continue
            expected = min(max(num / den, 0.0), 1.0)
            assert truncated_chi_survival(x, p, t) == pytest.approx(expected, abs=1e-10)

    def test_far_tail_is_finite_and_monotone(self):
        t = IntervalUnion.from_pairs([(60.0, 70.0)])
        vals = [truncated_chi_survival(x, 1, t) for x in (60.0, 62.0, 65.0, 69.0)]
        assert vals[0] == 1.0
        assert all(b <= a for a, b in zip(vals, vals[1:]))
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_log_survival_matches_linear(self):
        for p in (1, 3):
            for x in (0.5, 2.0, 5.0):
                assert chi_log_survival(x, p) == pytest.approx(
                    math.log(chi_survival(x, p)), abs=1e-10)


class TestFSurvival:
    def test_at_zero(self):
        assert f_survival(0.0, 3, 10) == 1.0

    def test_equal_dof_median(self):
        for d in (1, 4, 9, 30):
            assert f_survival(1.0, d, d) == pytest.approx(0.5, abs=1e-10)

    def test_quantile_quadrature_oracle(self):
        # 0.95 quantile of F(2, 10) located by integrating the density.
        d1, d2 = 2, 10
        c = math.lgamma((d1 + d2) / 2) - math.lgamma(d1 / 2) - math.lgamma(d2 / 2)
        c += (d1 / 2) * math.log(d1 / d2)

        def density(x):
            return math.exp(
                c + (d1 / 2 - 1) * math.log(x)
                - ((d1 + d2) / 2) * math.log1p(d1 * x / d2)
            )

        def cdf(x):
            val, _ = integrate.quad(density, 0, x, limit=200)
            return val

        q95 = optimize.brentq(lambda x: cdf(x) - 0.95, 1e-6, 100, xtol=1e-12)
        assert f_survival(q95, d1, d2) == pytest.approx(0.05, abs=1e-9)

    def test_rejects_bad_dof(self):
        with pytest.raises(ValueError):
            f_survival(1.0, 2, 0)


interval_lists = st.lists(
    st.tuples(st.floats(0, 50, allow_nan=False), st.floats(0, 50, allow_nan=False)),
    min_size=0, max_size=6,
)


class TestIntervalUnion:
    @given(interval_lists)
    @settings(max_examples=200, deadline=None)
    def test_normalization_idempotent(self, pairs):
        u = IntervalUnion.from_pairs(pairs)
        assert u.normalized() == u

    @given(interval_lists)
    @settings(max_examples=200, deadline=None)
    def test_canonical_form(self, pairs):
        u = IntervalUnion.from_pairs(pairs)
        for (lo1, hi1), (lo2, hi2) in zip(u.intervals, u.intervals[1:]):
            assert lo1 <= hi1
            assert lo2 > hi1  # strictly positive gap

    def test_merging_touching_intervals(self):
        u = IntervalUnion.from_pairs([(1, 2), (2, 3), (5, 6)])
        assert u.intervals == ((1.0, 3.0), (5.0, 6.0))

    def test_clamps_to_nonnegative(self):
        u = IntervalUnion.from_pairs([(-2.0, 1.0)])
        assert u.intervals == ((0.0, 1.0),)

    def test_contains_and_distance(self):
        u = IntervalUnion.from_pairs([(1, 2), (4, math.inf)])
        assert u.contains(1.5)
        assert u.contains(100.0)
        assert not u.contains(3.0)
        assert u.distance(3.0) == pytest.approx(1.0)
        assert u.distance(1.5) == 0.0

    def test_dilation(self):
        u = IntervalUnion.from_pairs([(1, 2)])
        v = u.dilated_to_include(2.0 + 1e-9)
        assert v.contains(2.0 + 1e-9)


class TestNormalStream:
    def test_determinism(self):
        a = standard_normal_stream(123).draw(1000)
        b = standard_normal_stream(123).draw(1000)
        np.testing.assert_array_equal(a, b)

    def test_moments(self):
        draws = standard_normal_stream(7).draw(1_000_000)
        assert abs(draws.mean()) < 0.004
        assert 0.994 <= draws.var() <= 1.006

    def test_spawned_streams_differ(self):
        parent = standard_normal_stream(1)
        c1, c2 = parent.spawn(2)
        assert not np.allclose(c1.draw(10), c2.draw(10))
