# -*- coding: utf-8 -*-
"""Modelo de juguete discreto con oráculos exactos por enumeración.

theta en {0, 1} con P(theta = 1) = p, dos decisiones f_1 = theta y
f_2 = 1 - theta, y una observación Y | theta ~ Bernoulli(a) si theta = 1,
Bernoulli(1 - a) si theta = 0. Todo se puede enumerar, así que sirve como
referencia exacta para EVPI, EVSI y E[P_l].
"""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import binom

from .decision import DecisionModel, Observation, ParameterRegistry, ThetaSample
from .exceptions import ModelError


class BernoulliToyModel(DecisionModel):
    decision_count = 2
    observation_dim = 1

    def __init__(self, prior_p=0.3, accuracy=0.8):
        if not 0 < prior_p < 1:
            raise ModelError(f"prior_p debe estar en (0, 1), no {prior_p}")
        if not 0 < accuracy < 1:
            raise ModelError(f"accuracy debe estar en (0, 1), no {accuracy}")
        self.prior_p = prior_p
        self.accuracy = accuracy
        self.registry = ParameterRegistry(['theta'])

    @property
    def f_max(self):
        return 1.0

    def sample_prior(self, rng, size):
        draws = (rng.generator.random(size) < self.prior_p).astype(float)
        return ThetaSample(self.registry, draws.reshape(size, 1))

    def net_benefits(self, theta):
        t = theta['theta']
        return np.column_stack([t, 1.0 - t])

    def sample_observation(self, theta, rng):
        if len(theta) != 1:
            raise ModelError("sample_observation recibe una única muestra de theta")
        success = self.accuracy if theta['theta'][0] == 1.0 else 1.0 - self.accuracy
        return Observation([float(rng.generator.random() < success)])

    def likelihood(self, y_value, theta_value):
        """rho(y | theta) para valores escalares o vectores de theta."""
        success = np.where(theta_value == 1.0, self.accuracy, 1.0 - self.accuracy)
        return success if y_value == 1.0 else 1.0 - success

    def log_likelihood(self, y, theta):
        self.check_observation(y)
        value = y[0]
        if value not in (0.0, 1.0):
            raise ModelError(f"La observación del modelo de juguete es 0 o 1, no {value}")
        return np.log(self.likelihood(value, theta['theta']))

    def marginal_likelihood(self, y_value):
        return self.prior_p * self.likelihood(y_value, 1.0) + (1.0 - self.prior_p) * self.likelihood(y_value, 0.0)

    def posterior_p(self, y_value):
        """P(theta = 1 | Y = y)."""
        return float(self.prior_p * self.likelihood(y_value, 1.0) / self.marginal_likelihood(y_value))

    def importance_sampler(self, y):
        self.check_observation(y)
        return BernoulliPosteriorSampler(self, self.posterior_p(y[0]))

    # --- ORÁCULOS EXACTOS ---
    def exact_evpi(self):
        return 1.0 - max(self.prior_p, 1.0 - self.prior_p)

    def _expected_posterior_max(self):
        total = 0.0
        for y_value in (0.0, 1.0):
            q = self.posterior_p(y_value)
            total += float(self.marginal_likelihood(y_value)) * max(q, 1.0 - q)
        return total

    def exact_evsi(self):
        return self._expected_posterior_max() - max(self.prior_p, 1.0 - self.prior_p)

    def exact_evpi_minus_evsi(self):
        return 1.0 - self._expected_posterior_max()

    def exact_level_expectation(self, inner_samples, importance_sampling=False):
        """E[P] con `inner_samples` muestras internas, enumerando Y y el conteo K de theta = 1.

        Sin muestreo de importancia K ~ Binomial(M, p) y g_1 = K w1 / (K w1 + (M - K) w0).
        Con el posterior exacto como q^Y los pesos son constantes, K ~ Binomial(M, q) y
        g_1 = K / M. Como max_d f_d = 1 siempre, P = 1 - max(g_1, 1 - g_1).
        """
        m = int(inner_samples)
        k = np.arange(m + 1)
        total = 0.0
        for y_value in (0.0, 1.0):
            if importance_sampling:
                pmf = binom.pmf(k, m, self.posterior_p(y_value))
                g1 = k / m
            else:
                pmf = binom.pmf(k, m, self.prior_p)
                w1 = self.likelihood(y_value, 1.0)
                w0 = self.likelihood(y_value, 0.0)
                g1 = k * w1 / (k * w1 + (m - k) * w0)
            level_value = 1.0 - np.maximum(g1, 1.0 - g1)
            total += float(self.marginal_likelihood(y_value)) * float(np.dot(pmf, level_value))
        return total


class BernoulliPosteriorSampler:
    """q^Y = posterior exacto Bernoulli(q)."""

    def __init__(self, model, posterior_p):
        self.model = model
        self.posterior_p = posterior_p
        self._log_ratio = {
            1.0: math.log(model.prior_p) - math.log(posterior_p),
            0.0: math.log1p(-model.prior_p) - math.log1p(-posterior_p),
        }

    def sample(self, rng, size):
        draws = (rng.generator.random(size) < self.posterior_p).astype(float)
        return ThetaSample(self.model.registry, draws.reshape(size, 1))

    def log_weight(self, theta):
        t = theta['theta']
        return np.where(t == 1.0, self._log_ratio[1.0], self._log_ratio[0.0])
