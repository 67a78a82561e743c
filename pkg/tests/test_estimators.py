import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import optimize

from phaselab import estimators as est
from phaselab.estimators import GaussianNoiseModel, LikelihoodKind, Method
from phaselab.model import CountSample, ExperimentConfig, simulate_counts, wrap_phase

counts_st = st.tuples(*[st.integers(0, 40)] * 4)


def circ(a, b):
    return abs(wrap_phase(a - b))


def scipy_boundary_ml(sample, theta0):
    """Independent oracle: bounded scalar search, polished by a root of the score."""
    n = np.asarray(sample, dtype=float)

    def negll(t):
        c, s = math.cos(t), math.sin(t)
        terms = [(n[0], 1 + c), (n[1], 1 - c), (n[2], 1 + s), (n[3], 1 - s)]
        if any(k > 0 and x <= 0 for k, x in terms):
            return math.inf
        return -sum(k * math.log(x) for k, x in terms if k > 0)

    res = optimize.minimize_scalar(negll, bounds=(theta0 - 1.2, theta0 + 1.2), method="bounded",
                                   options={"xatol": 1e-10})

    def score(t):
        c, s = math.cos(t), math.sin(t)
        out = 0.0
        for k, num, den in ((n[0], -s, 1 + c), (n[1], s, 1 - c), (n[2], c, 1 + s), (n[3], -c, 1 - s)):
            if k > 0:
                out += k * num / den
        return out

    lo, hi = res.x - 1e-4, res.x + 1e-4
    if score(lo) * score(hi) < 0:
        return optimize.brentq(score, lo, hi, xtol=1e-15)
    return res.x


class TestGoldenValues:
    def test_nfm_example(self):
        e = est.nfm_estimate(CountSample(3, 1, 4, 2))
        assert e.theta == pytest.approx(math.pi / 4, abs=1e-12)
        assert e.visibility_hat == pytest.approx(0.565685424949238, abs=1e-12)
        assert e.method is Method.NFM and e.valid

    def test_ml_interior_example(self):
        e = est.poisson_ml_estimate(CountSample(3, 1, 4, 2))
        assert e.theta == pytest.approx(0.5880026035475674, abs=1e-12)
        assert e.visibility_hat == pytest.approx(0.6009252125773316, abs=1e-12)
        assert not e.on_boundary

    def test_ml_boundary_example(self):
        e = est.poisson_ml_estimate(CountSample(5, 0, 0, 5))
        assert e.theta == pytest.approx(-math.pi / 4, abs=1e-12)
        assert e.visibility_hat == 1.0 and e.on_boundary

    @pytest.mark.parametrize(
        "sample,theta",
        [
            ((9, 0, 7, 1), 0.5147020467380963),
            ((12, 3, 11, 0), 1.108913072472872),
            ((2, 0, 2, 0), math.pi / 4),
        ],
    )
    def test_boundary_against_scipy(self, sample, theta):
        e = est.poisson_ml_estimate(CountSample(*sample))
        assert e.on_boundary
        assert e.theta == pytest.approx(theta, abs=1e-9)
        ref = scipy_boundary_ml(sample, math.atan2((sample[2] - sample[3]) / (sample[2] + sample[3]),
                                                   (sample[0] - sample[1]) / (sample[0] + sample[1])))
        assert circ(e.theta, ref) < 1e-6

    def test_unconstrained_has_no_visibility(self):
        e = est.unconstrained_ml_estimate(CountSample(5, 0, 0, 5))
        assert e.visibility_hat is None and e.theta == pytest.approx(-math.pi / 4)


class TestInvalid:
    @pytest.mark.parametrize("fn", [est.nfm_estimate, est.poisson_ml_estimate,
                                    est.unconstrained_ml_estimate, est.single_param_ml_estimate])
    def test_all_zero(self, fn):
        e = fn(CountSample(0, 0, 0, 0))
        assert not e.valid and math.isnan(e.theta)

    @pytest.mark.parametrize("sample", [(3, 3, 2, 2), (3, 0, 0, 0), (0, 0, 1, 4)])
    def test_ml_undefined_ratios(self, sample):
        assert not est.poisson_ml_estimate(CountSample(*sample)).valid

    def test_nfm_single_pair_is_valid(self):
        e = est.nfm_estimate(CountSample(3, 0, 0, 0))
        assert e.valid and e.theta == 0.0

    def test_boundary_phase_rejects_flat(self):
        with pytest.raises(ValueError):
            est.boundary_ml_phase(CountSample(0, 0, 0, 0), 0.0)

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            est.nfm_batch(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            est.nfm_batch([[1, -1, 0, 0]])


class TestLikelihoods:
    def test_poisson_zero_mean_with_counts_is_minus_inf(self):
        assert est.poisson_loglik((0, 2, 1, 1), 0.0, 1.0, 10.0) == -math.inf

    def test_poisson_zero_counts_ignore_zero_mean(self):
        assert math.isfinite(est.poisson_loglik((3, 0, 1, 1), 0.0, 1.0, 10.0))

    def test_gaussian_peak_at_means(self):
        sample = (6.0, 2.0, 5.0, 3.0)
        # sample equals the means for N = 8, V = 0.5, phase = atan2(1/4, 1/2) scaled
        v = math.hypot(0.5, 0.25)
        phase = math.atan2(0.25, 0.5)
        assert est.gaussian_loglik(sample, phase, v, 8.0) == pytest.approx(0.0, abs=1e-12)

    def test_noise_model_validates(self):
        with pytest.raises(ValueError):
            GaussianNoiseModel(0.0)

    @given(counts_st, st.floats(-3, 3))
    def test_boundary_score_is_derivative(self, sample, theta):
        assume(sum(sample) > 0)
        c, s = math.cos(theta), math.sin(theta)
        dens = (1 + c, 1 - c, 1 + s, 1 - s)
        # finite differences are meaningless next to a pole of the score
        assume(all(d > 0.05 for n, d in zip(sample, dens) if n > 0))
        h = 1e-6
        f = lambda t: est.boundary_loglik(sample, t)  # noqa: E731
        fp, fm = f(theta + h), f(theta - h)
        assume(math.isfinite(fp) and math.isfinite(fm) and math.isfinite(f(theta)))
        num = (fp - fm) / (2 * h)
        assert est.boundary_score(sample, theta) == pytest.approx(num, rel=1e-4, abs=1e-3)


class TestProperties:
    @given(counts_st)
    def test_phases_wrapped(self, sample):
        for fn in (est.nfm_estimate, est.poisson_ml_estimate, est.single_param_ml_estimate):
            e = fn(CountSample(*sample))
            if e.valid:
                assert -math.pi < e.theta <= math.pi

    @given(counts_st)
    def test_constrained_visibility_in_unit_interval(self, sample):
        e = est.poisson_ml_estimate(CountSample(*sample))
        if e.valid:
            assert 0.0 < e.visibility_hat <= 1.0
            assert e.on_boundary == (e.visibility_hat == 1.0 and e.on_boundary)

    @given(counts_st)
    def test_nfm_visibility_capped(self, sample):
        e = est.nfm_estimate(CountSample(*sample))
        if e.valid:
            assert 0.0 <= e.visibility_hat <= 1.0

    @given(counts_st)
    def test_swap_within_cos_pair_reflects_phase(self, sample):
        # (n3, n4) -> (n4, n3) maps theta -> pi - theta
        n3, n4, n5, n6 = sample
        for fn in (est.nfm_estimate, est.poisson_ml_estimate):
            a = fn(CountSample(n3, n4, n5, n6))
            b = fn(CountSample(n4, n3, n5, n6))
            assert a.valid == b.valid
            if a.valid:
                assert circ(b.theta, math.pi - a.theta) < 1e-7

    @given(counts_st)
    def test_swap_within_sin_pair_negates_phase(self, sample):
        n3, n4, n5, n6 = sample
        for fn in (est.nfm_estimate, est.poisson_ml_estimate):
            a = fn(CountSample(n3, n4, n5, n6))
            b = fn(CountSample(n3, n4, n6, n5))
            if a.valid:
                assert circ(b.theta, -a.theta) < 1e-7

    @given(counts_st)
    def test_swap_within_sin_pair_keeps_boundary_maximum(self, sample):
        # the V = 1 maximum can be a tie between mirrored lobes (e.g. n3 == n4),
        # so compare attained likelihoods rather than phases
        n3, n4, n5, n6 = sample
        mirrored = (n3, n4, n6, n5)
        a = est.single_param_ml_estimate(CountSample(*sample))
        b = est.single_param_ml_estimate(CountSample(*mirrored))
        if a.valid:
            la = est.boundary_loglik(sample, a.theta)
            lb = est.boundary_loglik(mirrored, b.theta)
            assert lb == pytest.approx(la, rel=1e-9, abs=1e-9)
            assert est.boundary_loglik(sample, -b.theta) == pytest.approx(la, rel=1e-9, abs=1e-9)

    @given(counts_st)
    def test_exchange_of_pairs_mirrors_phase(self, sample):
        # (n3, n4) <-> (n5, n6) maps theta -> pi/2 - theta
        n3, n4, n5, n6 = sample
        a = est.poisson_ml_estimate(CountSample(n3, n4, n5, n6))
        b = est.poisson_ml_estimate(CountSample(n5, n6, n3, n4))
        if a.valid:
            assert circ(b.theta, math.pi / 2 - a.theta) < 1e-7

    @given(counts_st, st.integers(2, 5))
    def test_scaling_counts_keeps_nfm_phase(self, sample, k):
        a = est.nfm_estimate(CountSample(*sample))
        b = est.nfm_estimate(CountSample(*(k * n for n in sample)))
        if a.valid:
            assert circ(a.theta, b.theta) < 1e-12

    @settings(max_examples=200)
    @given(counts_st)
    def test_boundary_solution_is_stationary_maximum(self, sample):
        e = est.single_param_ml_estimate(CountSample(*sample))
        if not e.valid:
            return
        score, curv = est._score_and_curvature(np.asarray(sample, float), np.asarray(e.theta))
        scale = sum(sample)
        ll0 = est.boundary_loglik(sample, e.theta)
        assert abs(score) < 1e-6 * scale or not math.isfinite(ll0)
        for d in (1e-3, -1e-3):
            assert est.boundary_loglik(sample, e.theta + d) <= ll0 + 1e-9

    @settings(max_examples=150, deadline=None)
    @given(counts_st)
    def test_boundary_matches_global_scan(self, sample):
        # the boundary ML starting from the closed-form direction is the global
        # maximiser on the unit circle whenever the closed form lies outside it
        e = est.poisson_ml_estimate(CountSample(*sample))
        if not (e.valid and e.on_boundary):
            return
        grid = np.linspace(-math.pi, math.pi, 20001)
        vals = est.boundary_loglik(sample, grid)
        best = grid[np.argmax(vals)]
        assert est.boundary_loglik(sample, e.theta) >= vals.max() - 1e-6
        assert circ(e.theta, best) < 2e-3 or est.boundary_loglik(sample, best) <= est.boundary_loglik(sample, e.theta) + 1e-9


class TestBatches:
    def test_batch_matches_scalar(self):
        counts = simulate_counts(ExperimentConfig(4.0, 0.95, 1.0, 300, seed=3))
        batches = {m: f(counts) for m, f in [("nfm", est.nfm_batch), ("ml", est.poisson_ml_batch),
                                            ("ml1", est.single_param_batch)]}
        scalar = {"nfm": est.nfm_estimate, "ml": est.poisson_ml_estimate, "ml1": est.single_param_ml_estimate}
        for i in range(0, 300, 7):
            for tag, batch in batches.items():
                s = scalar[tag](CountSample(*counts[i]))
                assert s.valid == bool(batch.valid[i])
                if s.valid:
                    assert s.theta == pytest.approx(batch.theta[i], abs=1e-12)

    def test_unconstrained_and_constrained_agree_inside(self):
        counts = simulate_counts(ExperimentConfig(30.0, 0.6, -2.0, 500, seed=1))
        c = est.poisson_ml_batch(counts)
        u = est.poisson_ml_batch(counts, constrained=False)
        inside = c.valid & ~c.on_boundary
        assert inside.sum() > 400
        assert np.array_equal(c.theta[inside], u.theta[inside])
        assert np.all(u.visibility[c.on_boundary] > 1)

    def test_fallback_rarely_needed(self):
        counts = simulate_counts(ExperimentConfig(10.0, 1.0, 0.7, 5000, seed=9))
        r = est.single_param_batch(counts)
        assert r.fallback.mean() < 0.05


class TestGridOracle:
    @pytest.mark.parametrize("sample", [(3, 1, 4, 2), (20, 8, 5, 17), (7, 2, 9, 1)])
    def test_poisson_interior(self, sample):
        ref = est.grid_ml_oracle(sample, LikelihoodKind.POISSON)
        e = est.poisson_ml_estimate(CountSample(*sample))
        assert circ(e.theta, ref.theta) < 2e-3
        assert e.visibility_hat == pytest.approx(ref.visibility_hat, abs=1e-2)

    @pytest.mark.parametrize("sample", [(3, 1, 4, 2), (20, 8, 5, 17), (9, 0, 7, 1)])
    def test_gaussian(self, sample):
        ref = est.grid_ml_oracle(sample, LikelihoodKind.GAUSSIAN)
        e = est.nfm_estimate(CountSample(*sample))
        assert circ(e.theta, ref.theta) < 2e-3
        assert e.visibility_hat == pytest.approx(ref.visibility_hat, abs=1e-2)

    def test_poisson_boundary(self):
        ref = est.grid_ml_oracle((9, 0, 7, 1), LikelihoodKind.POISSON)
        assert ref.on_boundary and ref.visibility_hat == 1.0
        assert circ(ref.theta, 0.5147020467380963) < 2e-3

    def test_flat_likelihood_is_invalid(self):
        assert not est.grid_ml_oracle((2, 2, 3, 3), LikelihoodKind.POISSON).valid

    def test_rejects_coarse_grid(self):
        with pytest.raises(ValueError):
            est.grid_ml_oracle((1, 2, 3, 4), LikelihoodKind.POISSON, theta_steps=100)
