import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from phaselab import metrics
from phaselab.metrics import MetricsError


def von_mises(kappa, mu, n, seed=0):
    return np.random.default_rng(seed).vonmises(mu, kappa, n)


class TestDispersion:
    def test_point_mass_is_zero(self):
        assert metrics.circular_dispersion(np.full(10, 1.3), replicates=0).sigma2 == pytest.approx(0.0, abs=1e-15)

    def test_opposite_pair_is_one(self):
        assert metrics.circular_dispersion([0.0, math.pi], replicates=0).sigma2 == pytest.approx(1.0)

    def test_von_mises_oracle(self):
        kappa = 8.0
        expected = 1.0 - (special.i1(kappa) / special.i0(kappa)) ** 2
        stat = metrics.circular_dispersion(von_mises(kappa, 2.0, 200000), replicates=0)
        assert stat.sigma2 == pytest.approx(expected, rel=0.02)

    def test_small_spread_matches_variance(self):
        x = np.random.default_rng(1).normal(0.0, 0.01, 50000)
        assert metrics.circular_dispersion(x, replicates=0).sigma2 == pytest.approx(np.var(x), rel=1e-3)

    def test_wraparound_is_harmless(self):
        x = np.random.default_rng(2).normal(0.0, 0.05, 5000)
        a = metrics.circular_dispersion(x + math.pi, replicates=0).sigma2
        b = metrics.circular_dispersion(np.mod(x + math.pi, 2 * math.pi) - math.pi, replicates=0).sigma2
        assert a == pytest.approx(b, abs=1e-12)

    def test_invalid_excluded_and_counted(self):
        x = np.array([0.1, np.nan, 0.2, 0.15, np.nan])
        stat = metrics.circular_dispersion(x, valid=[True, True, True, False, True], replicates=0)
        assert stat.n_valid == 2 and stat.n_invalid == 3
        assert stat.sigma2 == pytest.approx(metrics.circular_dispersion([0.1, 0.2], replicates=0).sigma2)

    def test_no_valid_raises(self):
        with pytest.raises(MetricsError):
            metrics.circular_dispersion([np.nan, np.nan])

    def test_interval_contains_point_and_truth(self):
        kappa = 20.0
        truth = 1.0 - (special.i1(kappa) / special.i0(kappa)) ** 2
        stat = metrics.circular_dispersion(von_mises(kappa, 0.0, 4000, seed=5), replicates=400, level=0.95)
        assert stat.ci_low <= stat.sigma2 <= stat.ci_high
        assert stat.ci_low <= truth <= stat.ci_high

    def test_bootstrap_deterministic(self):
        x = von_mises(4.0, 0.0, 500)
        assert metrics.circular_dispersion(x, seed=3) == metrics.circular_dispersion(x, seed=3)
        assert metrics.circular_dispersion(x, seed=3) != metrics.circular_dispersion(x, seed=4)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=50))
    def test_bounded(self, xs):
        s = metrics.circular_dispersion(xs, replicates=0).sigma2
        assert 0.0 <= s <= 1.0

    @settings(max_examples=50)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=50), st.floats(-5, 5))
    def test_rotation_invariant(self, xs, shift):
        a = metrics.circular_dispersion(xs, replicates=0).sigma2
        b = metrics.circular_dispersion(np.asarray(xs) + shift, replicates=0).sigma2
        assert a == pytest.approx(b, abs=1e-9)


class TestBias:
    def test_recovers_offset(self):
        x = von_mises(50.0, 0.3, 20000)
        assert metrics.circular_bias(x, 0.25) == pytest.approx(0.05, abs=0.003)

    def test_wraps(self):
        b = metrics.circular_bias([math.pi - 0.01], -math.pi + 0.01)
        assert b == pytest.approx(-0.02, abs=1e-12)

    def test_vanishing_resultant(self):
        with pytest.raises(MetricsError):
            metrics.circular_bias([0.0, math.pi], 0.0)


class TestHitFrequency:
    def test_counts_within_half_width(self):
        x = np.array([0.0, 0.1, 0.2, -0.15, 3.0])
        assert metrics.hit_frequency(x, 0.0, 0.15) == pytest.approx(3 / 5)

    def test_circular_distance(self):
        assert metrics.hit_frequency([math.pi - 0.01], -math.pi + 0.01, 0.05) == 1.0

    def test_full_circle(self):
        assert metrics.hit_frequency(np.linspace(-3, 3, 11), 0.5, math.pi) == 1.0

    @pytest.mark.parametrize("w", [0.0, -1.0, 4.0])
    def test_window_domain(self, w):
        with pytest.raises(ValueError):
            metrics.hit_frequency([0.0], 0.0, w)

    def test_monotone_in_window(self):
        x = von_mises(3.0, 0.0, 1000)
        f = [metrics.hit_frequency(x, 0.0, w) for w in np.linspace(0.05, math.pi, 20)]
        assert np.all(np.diff(f) >= 0)

    def test_efficiency_difference(self):
        assert metrics.efficiency_difference(0.7, 0.65) == pytest.approx(0.05)
        with pytest.raises(ValueError):
            metrics.efficiency_difference(1.2, 0.5)


class TestBootstrap:
    def test_minimum_replicates(self):
        with pytest.raises(ValueError):
            metrics.bootstrap_interval(np.arange(10.0), np.mean, replicates=100)

    def test_mean_interval_width(self):
        x = np.random.default_rng(0).normal(0, 1, 2000)
        lo, hi = metrics.bootstrap_interval(x, np.mean, replicates=1000, level=0.68)
        se = 1 / math.sqrt(2000)
        assert (hi - lo) / 2 == pytest.approx(se, rel=0.15)

    def test_paired_vector_statistic(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0, 1, 500)
        b = a + rng.normal(0, 0.1, 500)
        lo, hi = metrics.bootstrap_interval((a, b), lambda x, y: np.array([x.mean(), (x - y).mean()]), replicates=300)
        assert lo.shape == (2,) and np.all(lo <= hi)
        # pairing makes the difference far tighter than the mean
        assert hi[1] - lo[1] < 0.3 * (hi[0] - lo[0])

    def test_needs_two_values(self):
        with pytest.raises(MetricsError):
            metrics.bootstrap_distribution(np.array([1.0]), np.mean, 10)

    def test_mean_resultant_fsum(self):
        r = metrics.mean_resultant(np.zeros(3))
        assert r == complex(1.0, 0.0)
        with pytest.raises(MetricsError):
            metrics.mean_resultant([])
