import math

import numpy as np
import pytest
from scipy.stats import norm

from tensor_rlct import (
    CpParams,
    ModelSpec,
    PriorSpec,
    compose,
    estimate_gn,
    estimate_lambda,
    kl_divergence,
    log_likelihood,
    predictive_log_density,
)
from tensor_rlct.gen_error import LambdaEstimate, TrialResult, predictive_log_density_batch, run_trial
from tensor_rlct.mcmc import McmcConfig, PosteriorSamples

from conftest import random_params

SMALL_MCMC = McmcConfig(total_iters=6000, burn_in=2000, thin=10, target_samples=400)


def samples_of(*params):
    return PosteriorSamples.from_params(params)


class TestPredictiveDensity:
    def test_single_sample(self, rng):
        w = random_params(rng, (2, 2, 2), 2)
        x = rng.standard_normal((2, 2, 2))
        assert predictive_log_density(x, samples_of(w)) == pytest.approx(log_likelihood(x, w), rel=1e-14)

    def test_duplicates(self, rng):
        ws = [random_params(rng, (2, 2, 2), 1) for _ in range(3)]
        x = rng.standard_normal((2, 2, 2))
        once = predictive_log_density(x, samples_of(*ws))
        twice = predictive_log_density(x, samples_of(*ws, *ws))
        assert twice == pytest.approx(once, rel=1e-13)

    def test_zero_residual(self, rng):
        w0 = random_params(rng, (2, 2, 2), 1)
        value = predictive_log_density(compose(w0), samples_of(w0, w0, w0))
        assert value == pytest.approx(-(8 / 2) * math.log(2 * math.pi), rel=1e-14)

    def test_permutation_invariant(self, rng):
        ws = [random_params(rng, (2, 1, 2), 2) for _ in range(6)]
        x = rng.standard_normal((2, 1, 2))
        a = predictive_log_density(x, samples_of(*ws))
        b = predictive_log_density(x, samples_of(*ws[::-1]))
        assert a == pytest.approx(b, rel=1e-14)

    def test_no_underflow(self, rng):
        # densities far below the smallest double; naive averaging gives log(0)
        w = CpParams(np.full((4, 1), 6.0), np.full((4, 1), 6.0), np.full((4, 1), 6.0))
        x = np.zeros((4, 4, 4))
        value = predictive_log_density(x, samples_of(w, w))
        assert math.isfinite(value)
        assert value == pytest.approx(log_likelihood(x, w))

    def test_empty(self):
        with pytest.raises(ValueError):
            PosteriorSamples.from_params([])

    def test_batch_matches_scalar(self, rng):
        ws = [random_params(rng, (2, 3, 2), 2) for _ in range(7)]
        xs = rng.standard_normal((5, 2, 3, 2)) * 3
        s = samples_of(*ws)
        expected = []
        for x in xs:
            # independent mixture density with scipy
            ll = np.array([norm.logpdf(x, compose(w)).sum() for w in ws])
            expected.append(np.log(np.mean(np.exp(ll - ll.max()))) + ll.max())
        np.testing.assert_allclose(predictive_log_density_batch(xs, s), expected, rtol=1e-10)


class TestEstimateGn:
    def test_truth_only(self, rng):
        w0 = random_params(rng, (2, 2, 2), 1)
        r = estimate_gn(w0, samples_of(w0), 5000, 1)
        assert abs(r.g_n) <= 3 * r.mc_stderr + 1e-12
        assert r.g_n >= -3 * r.mc_stderr - 1e-12

    def test_single_wrong_sample_is_kl(self, rng):
        w0 = random_params(rng, (2, 2, 2), 1)
        w = random_params(rng, (2, 2, 2), 2, scale=0.8)
        r = estimate_gn(w0, samples_of(w), 10000, 2)
        assert abs(r.g_n - kl_divergence(w, w0)) < 3 * r.mc_stderr
        assert r.n_test == 10000

    def test_stderr_scaling(self, rng):
        w0 = random_params(rng, (2, 2, 2), 1)
        ws = [random_params(rng, (2, 2, 2), 2, scale=0.5) for _ in range(20)]
        s = samples_of(*ws)
        small = estimate_gn(w0, s, 5000, 3).mc_stderr
        large = estimate_gn(w0, s, 20000, 3).mc_stderr
        assert large / small == pytest.approx(0.5, rel=0.2)
        double = estimate_gn(w0, s, 10000, 3).mc_stderr
        assert double / small == pytest.approx(1 / math.sqrt(2), rel=0.2)

    def test_invalid_n_test(self, rng):
        w0 = random_params(rng, (1, 1, 1), 1)
        with pytest.raises(ValueError):
            estimate_gn(w0, samples_of(w0), 0, 1)


class TestLambdaEstimate:
    def test_summary_statistics(self):
        spec = ModelSpec(1, 1, 1, 1, 1, 50)
        trials = [TrialResult(g, 10, 0.0) for g in (0.01, 0.02, 0.03)]
        est = LambdaEstimate(spec, trials, 3)
        assert est.lambda_hat == pytest.approx(1.0)
        assert est.lambda_std == pytest.approx(50 * 0.01)

    def test_requires_trials(self):
        with pytest.raises(ValueError):
            LambdaEstimate(ModelSpec(1, 1, 1, 1, 1), [], 1)

    def test_trial_is_reproducible_in_isolation(self):
        spec = ModelSpec(2, 2, 2, 2, 1, 100)
        est = estimate_lambda(spec, PriorSpec(), SMALL_MCMC, 2, 2, seed=5, n_test=500)
        again = run_trial(spec, PriorSpec(), SMALL_MCMC, 5, 1, 1, 500)
        assert est.trials[3].g_n == again.g_n
        assert (est.trials[3].redraw, est.trials[3].dataset) == (1, 1)

    def test_long_n_sanity(self):
        spec = ModelSpec(1, 1, 1, 1, 1, 5000)
        est = estimate_lambda(spec, PriorSpec(), McmcConfig(), 2, 5, seed=1, n_test=10000)
        assert 0.1 <= est.lambda_hat <= 1.5
        assert est.lambda_hat > 0

    def test_initialization_independence(self):
        spec = ModelSpec(2, 2, 2, 2, 1, 100)
        base = estimate_lambda(spec, PriorSpec(), McmcConfig(), 2, 5, seed=3)
        over = estimate_lambda(spec, PriorSpec(), McmcConfig(init="overdispersed"), 2, 5, seed=3)
        assert abs(base.lambda_hat - over.lambda_hat) <= 2 * base.lambda_stderr
