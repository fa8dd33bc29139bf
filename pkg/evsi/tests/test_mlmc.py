import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase
from scipy.special import softmax

from evsi.case_study import CaseStudyModel
from evsi.decision import Observation, ThetaSample
from evsi.distributions import RandomSource
from evsi.exceptions import ConfigError, DegenerateLikelihoodError, RateRegressionError
from evsi.mlmc import (
    CONVERGENCE_COLUMNS,
    LevelDraw,
    LevelEstimate,
    MlmcConfig,
    WeightedSums,
    bias_converged,
    convergence_report,
    draw_inner_terms,
    inner_estimate,
    level_values,
    likelihood_moment_diagnostic,
    nested_mc_cost,
    optimal_samples,
    regress_rates,
    run_level,
    run_mlmc,
    run_nested_mc,
    sample_delta_p,
)
from evsi.toy import BernoulliToyModel

from .helpers import ConstantPayoffModel, LinearGaussianModel


class _ZeroLikelihoodModel(ConstantPayoffModel):
    def log_likelihood(self, y, theta):
        return np.full(len(theta), -np.inf)

    def log_likelihood_batch(self, ys, values):
        return np.full(values.shape[:2], -np.inf)


def _reference_level_value(f, log_w):
    """P con los pesos normalizados fila a fila, sin pasar por WeightedSums."""
    w = softmax(log_w, axis=-1)
    g = np.einsum('bm,bmd->bd', w, f)
    return np.einsum('bm,bm->b', w, f.max(axis=-1)) - g.max(axis=-1)


def _synthetic_level(level, mean, variance, cost=1):
    """Nivel con dos muestras cuya media y varianza son exactamente las pedidas."""
    estimate = LevelEstimate(level, cost)
    half_range = math.sqrt(variance / 2.0)
    for dp in (mean - half_range, mean + half_range):
        estimate.add(LevelDraw(level, dp, 0.0))
    return estimate


class ConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = MlmcConfig()
        self.assertEqual(config.inner_samples(0), 16)
        self.assertEqual(config.inner_samples(3), 128)

    def test_invalid_values(self):
        for kwargs in ({'eps': 0}, {'eps': -1.0}, {'eps': float('inf')}, {'m0': 0},
                       {'initial_levels': 1}, {'threads': 0}, {'retry_cap': 0},
                       {'variance_fraction': 1.0}, {'initial_samples_per_level': 1}):
            with self.subTest(**kwargs), self.assertRaises(ConfigError):
                MlmcConfig(**kwargs)


class InnerEstimateTests(SimpleTestCase):
    def test_constant_payoffs(self):
        model = ConstantPayoffModel((1.0, 3.0, 2.0))
        thetas = model.sample_prior(RandomSource(1), 50)
        g_max, g_d = inner_estimate(model, Observation([0.3]), thetas, np.zeros(50))
        self.assertAlmostEqual(g_max, 3.0, places=12)
        np.testing.assert_allclose(g_d, [1.0, 3.0, 2.0], rtol=1e-12)

    def test_single_decision_gives_zero_level_value(self):
        model = LinearGaussianModel(decisions=1)
        thetas = model.sample_prior(RandomSource(2), 20)
        g_max, g_d = inner_estimate(model, Observation([0.1]), thetas, model.log_likelihood(Observation([0.1]), thetas))
        self.assertAlmostEqual(g_max - g_d.max(), 0.0, delta=1e-12)

    def test_hand_computed_weights(self):
        model = BernoulliToyModel()
        y = Observation([1.0])
        thetas = ThetaSample(model.registry, [[1.0], [0.0], [1.0], [1.0]])
        g_max, g_d = inner_estimate(model, y, thetas, model.log_likelihood(y, thetas))
        self.assertAlmostEqual(g_max, 1.0, places=14)
        self.assertAlmostEqual(g_d[0], 2.4 / 2.6, places=14)
        self.assertAlmostEqual(g_d[1], 0.2 / 2.6, places=14)

    def test_shift_invariance_of_log_weights(self):
        model = BernoulliToyModel()
        y = Observation([0.0])
        thetas = model.sample_prior(RandomSource(3), 30)
        log_w = model.log_likelihood(y, thetas)
        _, base = inner_estimate(model, y, thetas, log_w)
        _, shifted = inner_estimate(model, y, thetas, log_w - 700.0)
        np.testing.assert_allclose(base, shifted, rtol=1e-12)

    def test_all_zero_weights(self):
        model = ConstantPayoffModel()
        thetas = model.sample_prior(RandomSource(4), 5)
        with self.assertRaises(DegenerateLikelihoodError):
            inner_estimate(model, Observation([0.0]), thetas, np.full(5, -np.inf))


class DeltaPTests(SimpleTestCase):
    def test_constant_model_has_no_correction(self):
        model = ConstantPayoffModel()
        for level in range(4):
            draw = sample_delta_p(model, level, MlmcConfig(m0=8), RandomSource(5, (level,)))
            self.assertAlmostEqual(draw.delta_p, 0.0, delta=1e-12)

    def test_identical_halves_give_zero_correction(self):
        model = LinearGaussianModel()
        for level in (1, 3):
            draw = sample_delta_p(model, level, MlmcConfig(m0=8), RandomSource(6), duplicate_halves=True)
            self.assertAlmostEqual(draw.delta_p, 0.0, delta=1e-12)
            self.assertAlmostEqual(draw.p_half_a, draw.p_half_b, delta=1e-12)

    def test_antithetic_identity(self):
        model = LinearGaussianModel()
        config = MlmcConfig(m0=8, use_importance_sampling=False)
        rngs = [RandomSource(7, (index,)) for index in range(20)]
        f, log_w = draw_inner_terms(model, model.sample_observations(rngs), 64, config, rngs)
        delta, p_fine, p_a, p_b, ok = level_values(3, f, log_w)

        expected_a = _reference_level_value(f[:, :32], log_w[:, :32])
        expected_b = _reference_level_value(f[:, 32:], log_w[:, 32:])
        expected_fine = _reference_level_value(f, log_w)
        self.assertTrue(ok.all())
        np.testing.assert_allclose(p_a, expected_a, atol=1e-12)
        np.testing.assert_allclose(p_b, expected_b, atol=1e-12)
        np.testing.assert_allclose(p_fine, expected_fine, atol=1e-12)
        np.testing.assert_allclose(delta, expected_fine - 0.5 * (expected_a + expected_b), atol=1e-12)

    def test_halves_keep_their_own_shift(self):
        # la mitad a queda ~800 nats por debajo: con un único desplazamiento sus pesos serían 0
        rng = np.random.default_rng(71)
        f = rng.normal(size=(3, 16, 2))
        log_w = rng.normal(size=(3, 16))
        log_w[:, :8] -= 800.0
        delta, p_fine, p_a, p_b, ok = level_values(1, f, log_w)
        self.assertTrue(ok.all())
        np.testing.assert_allclose(p_a, _reference_level_value(f[:, :8], log_w[:, :8]), atol=1e-12)
        np.testing.assert_allclose(p_b, _reference_level_value(f[:, 8:], log_w[:, 8:]), atol=1e-12)
        np.testing.assert_allclose(p_fine, _reference_level_value(f, log_w), atol=1e-12)
        self.assertTrue(np.all(np.isfinite(delta)))

    def test_pooled_sums_rescale_each_half(self):
        rng = np.random.default_rng(72)
        f = rng.normal(size=(2, 10, 3))
        log_w = rng.normal(size=(2, 10)) + np.array([[0.0] * 5 + [30.0] * 5, [-40.0] * 5 + [0.0] * 5])
        pooled = WeightedSums.of(f[:, :5], log_w[:, :5]) + WeightedSums.of(f[:, 5:], log_w[:, 5:])
        np.testing.assert_allclose(pooled.level_values(), _reference_level_value(f, log_w), atol=1e-12)
        np.testing.assert_array_equal(pooled.shift, log_w.max(axis=1))
        self.assertEqual(pooled.count, 10)

    def test_only_a_fully_degenerate_half_flags_the_row(self):
        f = np.ones((3, 8, 2))
        log_w = np.zeros((3, 8))
        log_w[0, :4] = -np.inf          # mitad a sin pesos
        log_w[1, :3] = -np.inf          # mitad a con un peso
        log_w[2, :] = -np.inf
        _, _, _, _, ok = level_values(1, f, log_w)
        np.testing.assert_array_equal(ok, [False, True, False])
        _, _, _, _, ok_pooled = level_values(0, f, log_w)
        np.testing.assert_array_equal(ok_pooled, [True, True, False])

    def test_single_draw_matches_run_level(self):
        model = LinearGaussianModel()
        config = MlmcConfig(m0=4, threads=1)
        estimate = run_level(model, 2, 5, config, RandomSource(9))
        draws = [sample_delta_p(model, 2, config, RandomSource(9).stream(2, index)) for index in range(5)]
        self.assertAlmostEqual(estimate.sum_dp, sum(d.delta_p for d in draws), delta=1e-12)
        self.assertAlmostEqual(estimate.sum_p, sum(d.p_fine for d in draws), delta=1e-12)

    def test_prior_sampling_never_resamples_on_the_case_study(self):
        config = MlmcConfig(m0=16, use_importance_sampling=False, threads=1)
        for scenario in (1, 2, 3):
            model = CaseStudyModel(scenario)
            for level in (1, 2):
                with self.subTest(scenario=scenario, level=level):
                    estimate = run_level(model, level, 200, config, RandomSource(74, (scenario, level)))
                    self.assertEqual(estimate.n_samples, 200)
                    self.assertEqual(estimate.resamples, 0)
                    self.assertTrue(math.isfinite(estimate.sum_dp))

    def test_level_zero_is_plain_p(self):
        model = BernoulliToyModel()
        draw = sample_delta_p(model, 0, MlmcConfig(m0=16), RandomSource(8))
        self.assertEqual(draw.delta_p, draw.p_fine)
        self.assertIsNone(draw.p_half_a)

    def test_same_stream_same_draw(self):
        model = LinearGaussianModel()
        config = MlmcConfig(m0=4)
        first = sample_delta_p(model, 2, config, RandomSource(9).stream(2, 17))
        again = sample_delta_p(model, 2, config, RandomSource(9).stream(2, 17))
        self.assertEqual(first.delta_p, again.delta_p)

    def test_degenerate_likelihood_exhausts_retries(self):
        model = _ZeroLikelihoodModel()
        config = MlmcConfig(m0=4, use_importance_sampling=False, retry_cap=5)
        with self.assertRaises(DegenerateLikelihoodError) as ctx:
            sample_delta_p(model, 1, config, RandomSource(10))
        self.assertEqual(ctx.exception.attempts, 5)

    def test_negative_level(self):
        with self.assertRaises(ConfigError):
            sample_delta_p(BernoulliToyModel(), -1, MlmcConfig(), RandomSource(1))


class RunLevelTests(SimpleTestCase):
    def test_two_samples_of_constant_model(self):
        estimate = run_level(ConstantPayoffModel(), 1, 2, MlmcConfig(m0=4), RandomSource(11))
        self.assertEqual(estimate.n_samples, 2)
        self.assertAlmostEqual(estimate.mean_dp, 0.0, delta=1e-12)
        self.assertAlmostEqual(estimate.var_dp, 0.0, delta=1e-20)

    def test_requires_two_samples(self):
        with self.assertRaises(ConfigError):
            run_level(ConstantPayoffModel(), 0, 1, MlmcConfig(), RandomSource(1))

    def test_result_does_not_depend_on_threads(self):
        model = LinearGaussianModel()
        single = run_level(model, 2, 300, MlmcConfig(m0=4, threads=1), RandomSource(12))
        pooled = run_level(model, 2, 300, MlmcConfig(m0=4, threads=4), RandomSource(12))
        self.assertEqual(single.sum_dp, pooled.sum_dp)
        self.assertEqual(single.sum_dp2, pooled.sum_dp2)
        self.assertEqual(single.sum_p, pooled.sum_p)

    def test_merge_matches_single_run(self):
        model = LinearGaussianModel()
        config = MlmcConfig(m0=4, threads=1)
        whole = run_level(model, 1, 200, config, RandomSource(13))
        parts = run_level(model, 1, 120, config, RandomSource(13)).merge(
            run_level(model, 1, 80, config, RandomSource(13), start=120))
        self.assertEqual(parts.n_samples, 200)
        self.assertAlmostEqual(parts.sum_dp, whole.sum_dp, delta=1e-12)

    def test_kurtosis_of_constant_level(self):
        estimate = LevelEstimate(0, 1)
        for _ in range(3):
            estimate.add(LevelDraw(0, 0.5, 0.5))
        self.assertEqual(estimate.kurtosis, 0.0)

    def test_kurtosis_of_symmetric_pair(self):
        self.assertAlmostEqual(_synthetic_level(0, 0.0, 2.0).kurtosis, 1.0, places=12)


class RateTests(SimpleTestCase):
    def test_exact_synthetic_rates(self):
        levels = [_synthetic_level(ell, 2.0 ** -ell, 2.0 ** (-1.5 * ell)) for ell in range(6)]
        alpha, beta = regress_rates(levels)
        self.assertAlmostEqual(alpha, 1.0, delta=1e-9)
        self.assertAlmostEqual(beta, 1.5, delta=1e-9)

    def test_needs_two_usable_levels(self):
        levels = [_synthetic_level(ell, 2.0 ** -ell, 2.0 ** -ell) for ell in range(3)]
        with self.assertRaises(RateRegressionError):
            regress_rates(levels, l_min=2)
        levels.append(_synthetic_level(3, 0.0, 0.0))
        with self.assertRaises(RateRegressionError):
            regress_rates(levels, l_min=2)

    def test_optimal_samples_formula(self):
        n = optimal_samples([4.0, 1.0], [1.0, 4.0], eps=1.0, variance_fraction=0.5)
        # sum sqrt(V C) = 2 + 2 = 4; N_l = ceil(sqrt(V/C) * 4 / 0.5)
        np.testing.assert_array_equal(n, [16, 4])

    def test_bias_check(self):
        self.assertTrue(bias_converged([1.0, 0.1, 0.01], 1.0, eps=1.0))
        self.assertFalse(bias_converged([1.0, 1.0, 1.0], 1.0, eps=1.0))


class DriverTests(SimpleTestCase):
    def test_constant_model_converges_to_zero(self):
        result = run_mlmc(ConstantPayoffModel(), MlmcConfig(eps=0.1, m0=4, threads=1), RandomSource(14))
        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.estimate, 0.0, delta=1e-10)

    def test_toy_estimate(self):
        model = BernoulliToyModel()
        result = run_mlmc(model, MlmcConfig(eps=0.05, m0=16, threads=1), RandomSource(15))
        self.assertTrue(result.converged)
        self.assertLess(abs(result.estimate - model.exact_evpi_minus_evsi()), 3 * 0.05)

    def test_telescoping_and_cost_bookkeeping(self):
        config = MlmcConfig(eps=0.05, m0=16, use_importance_sampling=False, threads=1)
        result = run_mlmc(BernoulliToyModel(), config, RandomSource(16))
        self.assertAlmostEqual(result.estimate, sum(e.mean_dp for e in result.levels), places=14)
        self.assertEqual(result.total_cost,
                         sum(n * config.m0 * 2 ** ell for ell, n in enumerate(result.samples)))
        self.assertEqual(result.final_level, len(result.levels) - 1)
        self.assertGreaterEqual(result.final_level, config.initial_levels - 1)
        self.assertTrue(all(n >= config.initial_samples_per_level for n in result.samples))
        schedule = result.schedule()
        self.assertEqual(list(schedule['n_samples']), result.samples)

    def test_max_level_stops_without_convergence(self):
        config = MlmcConfig(eps=0.1, m0=2, max_level=4, threads=1, use_importance_sampling=False)
        with mock.patch('evsi.mlmc.bias_converged', return_value=False):
            result = run_mlmc(ConstantPayoffModel(), config, RandomSource(17))
        self.assertFalse(result.converged)
        self.assertEqual(result.final_level, 4)
        self.assertEqual(len(result.levels), 5)


class NestedTests(SimpleTestCase):
    def test_cost_formula(self):
        level = LevelEstimate(3, 128)
        level.add(LevelDraw(3, 0.0, 1.0))
        level.add(LevelDraw(3, 0.0, 3.0))
        # V[P_3] = 2 -> ceil(2 / (0.5 * 1)) * 16 * 2^3
        self.assertEqual(nested_mc_cost([level], 3, eps=1.0, m0=16), 512)

    def test_constant_model(self):
        result = run_nested_mc(ConstantPayoffModel(), MlmcConfig(m0=4, threads=1), 2, 50, RandomSource(18))
        self.assertAlmostEqual(result.estimate, 0.0, delta=1e-12)
        self.assertEqual(result.total_cost, 50 * 4 * 4)

    def test_toy_matches_enumeration(self):
        model = BernoulliToyModel()
        config = MlmcConfig(m0=16, use_importance_sampling=False, threads=1)
        result = run_nested_mc(model, config, 1, 10_000, RandomSource(19))
        self.assertLess(abs(result.estimate - model.exact_level_expectation(32)), 4 * result.std_error)


class ConvergenceReportTests(SimpleTestCase):
    def test_table_layout(self):
        config = MlmcConfig(m0=16, use_importance_sampling=False, threads=1)
        report = convergence_report(BernoulliToyModel(), 3, 100, config, RandomSource(20))
        self.assertEqual(list(report.table.columns), CONVERGENCE_COLUMNS)
        self.assertEqual(list(report.table['level']), [0, 1, 2, 3])
        self.assertEqual(list(report.table['cost']), [16, 32, 64, 128])
        self.assertTrue((report.table['var_dp'] >= 0).all())

    def test_minimum_samples(self):
        with self.assertRaises(ConfigError):
            convergence_report(BernoulliToyModel(), 2, 99, MlmcConfig(), RandomSource(1))

    def test_toy_correction_variance_decays(self):
        model = BernoulliToyModel()
        config = MlmcConfig(m0=16, use_importance_sampling=False, threads=1)
        low = run_level(model, 2, 4_000, config, RandomSource(21))
        high = run_level(model, 5, 4_000, config, RandomSource(21))
        self.assertLess(high.var_dp, low.var_dp)


class LikelihoodMomentTests(SimpleTestCase):
    def test_exact_posterior_proposal_has_unit_moments(self):
        estimate, _ = likelihood_moment_diagnostic(BernoulliToyModel(), 2, 50, 64, RandomSource(22),
                                                   use_importance_sampling=True)
        self.assertAlmostEqual(estimate, 1.0, delta=1e-12)

    def test_prior_proposal_second_moment_at_least_one(self):
        estimate, std_error = likelihood_moment_diagnostic(BernoulliToyModel(), 2, 50, 64, RandomSource(23))
        self.assertGreaterEqual(estimate, 1.0 - 1e-12)
        self.assertGreaterEqual(std_error, 0.0)
