import math

import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import quad
from scipy.special import expit

from evsi.distributions import (
    Beta,
    Binomial,
    Constant,
    Link,
    LogitNormal,
    LogNormal,
    MvNormalParams,
    MvTransformedNormal,
    Normal,
    RandomSource,
    binomial_log_pmf,
    log_density,
    logitnormal_moments,
    mvn_log_density,
    sample,
    sample_mvn,
)
from evsi.exceptions import DistributionError


class RandomSourceTests(SimpleTestCase):
    def test_same_seed_same_sequence(self):
        a = Normal(30, 25).sample(RandomSource(7), 1000)
        b = Normal(30, 25).sample(RandomSource(7), 1000)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_independent_of_derivation_order(self):
        root = RandomSource(11)
        first = root.stream(3, 5).generator.random(10)
        root.stream(0).generator.random(100)
        again = RandomSource(11).stream(3, 5).generator.random(10)
        np.testing.assert_array_equal(first, again)
        self.assertFalse(np.array_equal(first, root.stream(3, 6).generator.random(10)))

    def test_seed_must_be_unsigned_64_bit(self):
        with self.assertRaises(DistributionError):
            RandomSource(-1)
        with self.assertRaises(DistributionError):
            RandomSource(2 ** 64)
        RandomSource(2 ** 64 - 1)


class UnivariateSamplingTests(SimpleTestCase):
    def test_constant(self):
        self.assertEqual(sample(Constant(0), RandomSource(1)), 0)

    def test_normal_mean(self):
        draws = sample(Normal(30, 25), RandomSource(2), 1_000_000)
        self.assertAlmostEqual(draws.mean(), 30.0, delta=0.02)

    def test_logitnormal_in_unit_interval_and_matches_quadrature(self):
        dist = LogitNormal(0.6, 1 / 36)
        draws = dist.sample(RandomSource(3), 1_000_000)
        self.assertTrue(np.all((draws > 0) & (draws < 1)))
        mean, variance = logitnormal_moments(0.6, 1 / 36)
        self.assertLess(abs(draws.mean() - mean), 4 * math.sqrt(variance / draws.size))

    def test_lognormal_is_exp_of_normal(self):
        draws = LogNormal(-1.5, 0.11).sample(RandomSource(4), 10)
        reference = np.exp(RandomSource(4).generator.normal(-1.5, math.sqrt(0.11), 10))
        np.testing.assert_allclose(draws, reference, rtol=1e-15)

    def test_invalid_parameters(self):
        for build in (lambda: Normal(0, 0), lambda: LogitNormal(0, -1), lambda: Beta(0, 1),
                      lambda: Binomial(0, 0.5), lambda: Binomial(10, 1.5)):
            with self.assertRaises(DistributionError):
                build()


class MvNormalTests(SimpleTestCase):
    def test_identity_covariance(self):
        params = MvNormalParams([0.0, 0.0], np.eye(2))
        draws = sample_mvn(params, RandomSource(5), 1_000_000)
        np.testing.assert_allclose(np.cov(draws.T), np.eye(2), atol=0.01)

    def test_cost_block_covariance(self):
        covariance = np.array([[300.0, 100.0], [100.0, 500.0]])
        params = MvNormalParams([1.5e4, 2e4], covariance)
        draws = sample_mvn(params, RandomSource(6), 1_000_000)
        np.testing.assert_allclose(np.cov(draws.T), covariance, rtol=0.05)

    def test_non_positive_definite_rejected(self):
        with self.assertRaises(DistributionError):
            MvNormalParams([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_asymmetric_rejected(self):
        with self.assertRaises(DistributionError):
            MvNormalParams([0.0, 0.0], [[1.0, 0.1], [0.2, 1.0]])

    def test_single_draw_shape(self):
        params = MvNormalParams([1.0, 2.0, 3.0], np.eye(3))
        self.assertEqual(sample_mvn(params, RandomSource(1)).shape, (3,))

    def test_density_matches_independent_product(self):
        params = MvNormalParams([1.0, -2.0], np.diag([4.0, 0.25]))
        x = np.array([[0.3, -1.7], [2.0, -2.5]])
        expected = Normal(1.0, 4.0).log_density(x[:, 0]) + Normal(-2.0, 0.25).log_density(x[:, 1])
        np.testing.assert_allclose(mvn_log_density(params, x), expected, rtol=1e-12)

    def test_transformed_block_includes_jacobian(self):
        block = MvTransformedNormal(MvNormalParams([0.6], [[1 / 36]]), Link.LOGIT)
        x = np.linspace(0.05, 0.95, 7)[:, None]
        np.testing.assert_allclose(block.log_density(x), LogitNormal(0.6, 1 / 36).log_density(x[:, 0]),
                                   rtol=1e-12)

    def test_transformed_block_outside_support(self):
        block = MvTransformedNormal(MvNormalParams([-1.5, -1.75], [[0.11, 0.02], [0.02, 0.06]]), Link.LOG)
        values = block.log_density(np.array([[0.2, 0.1], [-0.2, 0.1]]))
        self.assertTrue(np.isfinite(values[0]))
        self.assertEqual(values[1], -np.inf)

    def test_marginal_families(self):
        params = MvNormalParams([-1.4, -1.1], [[0.10, 0.05], [0.05, 0.25]])
        marginal = MvTransformedNormal(params, Link.LOGIT).marginal(1)
        self.assertEqual(marginal, LogitNormal(-1.1, 0.25))


class LogDensityTests(SimpleTestCase):
    def test_standard_normal_mode(self):
        self.assertAlmostEqual(float(log_density(Normal(0, 1), 0.0)), -0.5 * math.log(2 * math.pi), places=12)

    def test_binomial_against_log_factorials(self):
        expected = math.lgamma(101) - 2 * math.lgamma(51) + 100 * math.log(0.5)
        self.assertAlmostEqual(float(log_density(Binomial(100, 0.5), 50)), expected, places=10)

    def test_beta_uniform(self):
        self.assertAlmostEqual(float(log_density(Beta(1, 1), 0.3)), 0.0, places=14)

    def test_out_of_support_is_minus_infinity(self):
        self.assertEqual(float(LogNormal(0, 1).log_density(-1.0)), -np.inf)
        self.assertEqual(float(LogitNormal(0, 1).log_density(1.0)), -np.inf)
        self.assertEqual(float(Beta(2, 2).log_density(1.5)), -np.inf)
        self.assertEqual(float(binomial_log_pmf(101, 100, 0.5)), -np.inf)
        self.assertEqual(float(binomial_log_pmf(2.5, 100, 0.5)), -np.inf)

    def test_binomial_masses_sum_to_one(self):
        for n, p in ((1, 0.3), (100, 0.2), (1000, 0.15)):
            total = np.exp(binomial_log_pmf(np.arange(n + 1), n, p)).sum()
            self.assertAlmostEqual(total, 1.0, delta=1e-12)

    def test_binomial_accepts_vector_probabilities(self):
        values = binomial_log_pmf(3, 10, np.array([0.1, 0.5]))
        self.assertAlmostEqual(values[1], float(binomial_log_pmf(3, 10, 0.5)), places=12)

    def test_continuous_densities_integrate_to_one(self):
        # (distribución, límites, punto cercano a la moda)
        cases = [
            (Normal(30, 25), 30 - 60, 30 + 60, 30.0),
            (Normal(2e5, 1e8), 2e5 - 1.2e5, 2e5 + 1.2e5, 2e5),
            (LogNormal(-1.5, 0.11), 0.0, 10.0, math.exp(-1.5)),
            (LogitNormal(0.6, 1 / 36), 0.0, 1.0, float(expit(0.6))),
            (LogitNormal(-1.4, 0.10), 0.0, 1.0, float(expit(-1.4))),
            (Beta(15, 85), 0.0, 1.0, 0.15),
        ]
        for dist, low, high, mode in cases:
            with self.subTest(dist=dist):
                total, _ = quad(lambda x: math.exp(float(dist.log_density(x))), low, high,
                                points=[mode], epsabs=1e-11, epsrel=1e-10, limit=400)
                self.assertAlmostEqual(total, 1.0, delta=1e-6)

    def test_change_of_variables_identity(self):
        rng = RandomSource(8).generator
        x = rng.uniform(0.01, 5.0, 100)
        expected = Normal(-1.5, 0.11).log_density(np.log(x)) - np.log(x)
        np.testing.assert_allclose(LogNormal(-1.5, 0.11).log_density(x), expected, rtol=1e-12)
        p = rng.uniform(0.01, 0.99, 100)
        expected = Normal(0.6, 1 / 36).log_density(np.log(p / (1 - p))) - np.log(p) - np.log1p(-p)
        np.testing.assert_allclose(LogitNormal(0.6, 1 / 36).log_density(p), expected, rtol=1e-12)


class LogitNormalMomentsTests(SimpleTestCase):
    def test_symmetric_mean(self):
        for sigma2 in (0.01, 0.5, 1.0):
            mean, _ = logitnormal_moments(0.0, sigma2)
            self.assertAlmostEqual(mean, 0.5, places=12)

    def test_matches_adaptive_quadrature(self):
        for mu, sigma2 in ((0.6, 1 / 36), (-1.4, 0.10), (-1.1, 0.25), (3.0, 1.0)):
            sd = math.sqrt(sigma2)
            phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
            mean_ref, _ = quad(lambda z: float(expit(mu + sd * z)) * phi(z), -12, 12,
                               epsabs=1e-15, epsrel=1e-13, limit=200)
            var_ref, _ = quad(lambda z: (float(expit(mu + sd * z)) - mean_ref) ** 2 * phi(z), -12, 12,
                              epsabs=1e-16, epsrel=1e-12, limit=200)
            mean, variance = logitnormal_moments(mu, sigma2)
            self.assertAlmostEqual(mean, mean_ref, delta=1e-10 * mean_ref)
            self.assertAlmostEqual(variance, var_ref, delta=1e-8 * var_ref)

    def test_degenerate_limit(self):
        _, variance = logitnormal_moments(0.6, 1e-12)
        self.assertLess(variance, 1e-10)

    def test_requires_positive_variance(self):
        with self.assertRaises(DistributionError):
            logitnormal_moments(0.0, 0.0)
