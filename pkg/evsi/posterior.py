# -*- coding: utf-8 -*-
"""Distribuciones de importancia q^Y(theta) para las muestras internas.

Para cada bloque del prior informado por algún canal se construye una
propuesta condicionada a Y:

- gaussian: bloque normal (escala identidad o log) observado por canales
  gaussianos en la misma escala. Es el posterior exacto del bloque completo,
  así que el compañero correlacionado también se desplaza.
- beta_conjugate: prior Beta observado por canales binomiales. Es el
  posterior exacto Beta(a + y, b + n - y).
- beta_marginal: probabilidad logit-normal observada por un canal binomial.
  Se aproxima el prior marginal por una Beta con la misma media y varianza,
  se muestrea su posterior beta-binomial y los demás componentes del bloque
  salen de su prior marginal. El peso usa la densidad conjunta exacta del
  prior, por lo que el estimador sigue siendo exacto.

Los bloques no informados se muestrean del prior y su factor pi0/q se cancela
sin evaluarse.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .decision import ChannelKind, ThetaSample
from .distributions import (
    BatchedBlocks,
    Beta,
    Link,
    MvNormalParams,
    MvTransformedNormal,
    as_block_distribution,
    beta_log_density,
    logitnormal_moments,
    mvn_log_density_rows,
)
from .exceptions import DegenerateLikelihoodError, DistributionError, ImportanceSamplingError, ModelError

logger = logging.getLogger(__name__)

GAUSSIAN = 'gaussian'
BETA_CONJUGATE = 'beta_conjugate'
BETA_MARGINAL = 'beta_marginal'

_CHANNEL_LINK = {ChannelKind.GAUSSIAN: Link.IDENTITY, ChannelKind.GAUSSIAN_LOG: Link.LOG}


# --- ÁLGEBRA CONJUGADA ---
def gaussian_condition(prior, observed_index, y, noise_var):
    """Posterior exacto de un bloque normal dado Y = theta_i + eps, eps ~ N(0, noise_var)."""
    if not noise_var > 0:
        raise DistributionError(f"La varianza del ruido debe ser positiva, no {noise_var}")
    if not 0 <= observed_index < prior.dimension:
        raise DistributionError(f"Componente observada fuera de rango: {observed_index}")
    column = prior.covariance[:, observed_index]
    denominator = prior.covariance[observed_index, observed_index] + noise_var
    mean = prior.mean + column * (y - prior.mean[observed_index]) / denominator
    covariance = prior.covariance - np.outer(column, column) / denominator
    covariance = 0.5 * (covariance + covariance.T)
    return MvNormalParams(mean, covariance)


@dataclass(frozen=True)
class BetaApprox:
    """Beta(a, b) con la media y varianza de una logit-normal."""

    a: float
    b: float

    @property
    def distribution(self):
        return Beta(self.a, self.b)

    @property
    def mean(self):
        return self.a / (self.a + self.b)

    @property
    def variance(self):
        total = self.a + self.b
        return self.a * self.b / (total ** 2 * (total + 1.0))

    def posterior(self, successes, trials):
        if not 0 <= successes <= trials:
            raise ModelError(f"Conteo binomial fuera de rango: {successes} de {trials}")
        return Beta(self.a + successes, self.b + trials - successes)


def beta_moment_match(mu, sigma2):
    mean, variance = logitnormal_moments(mu, sigma2)
    spread = mean * (1.0 - mean)
    if not 0 < variance < spread:
        raise DistributionError(
            f"Varianza {variance:.3e} no factible para una Beta con media {mean:.6f}"
        )
    scale = spread / variance - 1.0
    return BetaApprox(mean * scale, (1.0 - mean) * scale)


# --- PROPUESTAS POR BLOQUE ---
@dataclass(frozen=True, eq=False)
class _MarginalBetaProposal:
    """Componente observado ~ Beta posterior, el resto ~ prior marginal."""

    observed: int
    beta: Beta
    partners: tuple

    def sample(self, rng, size):
        values = np.empty((size, len(self.partners) + 1))
        values[:, self.observed] = self.beta.sample(rng, size)
        others = [i for i in range(values.shape[1]) if i != self.observed]
        for column, marginal in zip(others, self.partners):
            values[:, column] = marginal.sample(rng, size)
        return values

    def log_density(self, values):
        total = self.beta.log_density(values[:, self.observed])
        others = [i for i in range(values.shape[1]) if i != self.observed]
        for column, marginal in zip(others, self.partners):
            total = total + marginal.log_density(values[:, column])
        return total


@dataclass(frozen=True, eq=False)
class _UnivariateProposal:
    distribution: object

    def sample(self, rng, size):
        return self.distribution.sample(rng, size).reshape(size, 1)

    def log_density(self, values):
        return self.distribution.log_density(values[:, 0])


@dataclass(frozen=True, eq=False)
class _JointProposal:
    distribution: MvTransformedNormal

    def sample(self, rng, size):
        return self.distribution.sample(rng, size).reshape(size, self.distribution.dimension)

    def log_density(self, values):
        return self.distribution.log_density(values)


@dataclass(frozen=True)
class BlockPlan:
    """Cómo se propone un bloque informado: tipo y canales (posición en Y, componente)."""

    block_index: int
    kind: str
    observations: tuple
    beta_approx: BetaApprox = None

    def proposal(self, block, channels, y):
        if self.kind == GAUSSIAN:
            dist = as_block_distribution(block.distribution)
            params = dist.params
            for position, component in self.observations:
                channel = channels[position]
                params = gaussian_condition(params, component, y[position], channel.variance)
            return _JointProposal(MvTransformedNormal(params, dist.link))

        successes = sum(y[position] for position, _ in self.observations)
        trials = sum(channels[position].trials for position, _ in self.observations)
        if self.kind == BETA_CONJUGATE:
            prior = block.distribution
            return _UnivariateProposal(Beta(prior.a + successes, prior.b + trials - successes))

        position, component = self.observations[0]
        dist = as_block_distribution(block.distribution)
        partners = tuple(dist.marginal(i) for i in range(dist.dimension) if i != component)
        return _MarginalBetaProposal(component, self.beta_approx.posterior(successes, trials), partners)

    # --- VERSIÓN POR LOTES ---
    def add_to_layout(self, layout, block, columns, channels):
        """Registra la propuesta en el muestreador por lotes; devuelve el índice a parametrizar."""
        if self.kind == GAUSSIAN:
            dist = as_block_distribution(block.distribution)
            params = dist.params
            for position, component in self.observations:
                # la covarianza condicionada no depende del valor observado
                params = gaussian_condition(params, component, 0.0, channels[position].variance)
            return layout.add_normal(columns, dist.link, dist.params.mean, params.covariance)
        if self.kind == BETA_CONJUGATE:
            return layout.add_beta(columns[0], block.distribution.a, block.distribution.b)

        component = self.observations[0][1]
        dist = as_block_distribution(block.distribution)
        index = layout.add_beta(columns[component], self.beta_approx.a, self.beta_approx.b)
        for i in range(dist.dimension):
            if i != component:
                marginal = dist.marginal(i)
                layout.add_normal([columns[i]], Link.LOGIT, [marginal.mu], [[marginal.sigma2]])
        return index

    def batch_means(self, block, channels, ys):
        """Medias posteriores (B, k) del bloque gaussiano para cada fila de ys."""
        dist = as_block_distribution(block.distribution)
        mean = np.tile(dist.params.mean, (len(ys), 1))
        covariance = dist.params.covariance
        for position, component in self.observations:
            column = covariance[:, component]
            denominator = covariance[component, component] + channels[position].variance
            mean = mean + column[None, :] * ((ys[:, position] - mean[:, component]) / denominator)[:, None]
            covariance = covariance - np.outer(column, column) / denominator
        return mean

    def batch_beta(self, block, channels, ys):
        """Parámetros (a, b) de la Beta posterior para cada fila de ys."""
        successes = sum(ys[:, position] for position, _ in self.observations)
        trials = sum(channels[position].trials for position, _ in self.observations)
        if np.any((successes < 0) | (successes > trials)):
            raise ModelError(f"Conteo binomial fuera de rango (0..{trials}) en el lote")
        prior = block.distribution if self.kind == BETA_CONJUGATE else self.beta_approx
        return prior.a + successes, prior.b + trials - successes

    def batch_log_density(self, block, values, mean=None, cholesky=None, beta=None):
        """log q^Y del bloque para valores (B, M, k)."""
        if self.kind == GAUSSIAN:
            link = as_block_distribution(block.distribution).link
            with np.errstate(divide='ignore', invalid='ignore'):
                jacobian = np.sum(link.log_jacobian(values), axis=-1)
                return mvn_log_density_rows(link.forward(values), mean[:, None, :], cholesky) + jacobian
        a, b = beta
        if self.kind == BETA_CONJUGATE:
            return beta_log_density(values[..., 0], a[:, None], b[:, None])

        component = self.observations[0][1]
        dist = as_block_distribution(block.distribution)
        total = beta_log_density(values[..., component], a[:, None], b[:, None])
        for i in range(dist.dimension):
            if i != component:
                total = total + dist.marginal(i).log_density(values[..., i])
        return total


def _plan_block(block_index, block, observed):
    """Decide la propuesta de un bloque; falla si la combinación no tiene posterior tratable."""
    dist = block.distribution
    kinds = {channel.kind for _, _, channel in observed}
    observations = tuple((position, component) for position, component, _ in observed)

    if kinds <= set(_CHANNEL_LINK):
        joint = as_block_distribution(dist)
        if joint is None or any(_CHANNEL_LINK[kind] is not joint.link for kind in kinds):
            raise ImportanceSamplingError(
                f"Canal gaussiano sobre {block.names} sin prior normal en la misma escala"
            )
        return BlockPlan(block_index, GAUSSIAN, observations)

    if kinds == {ChannelKind.BINOMIAL}:
        if isinstance(dist, Beta):
            return BlockPlan(block_index, BETA_CONJUGATE, observations)
        joint = as_block_distribution(dist)
        if joint is not None and joint.link is Link.LOGIT and len(observed) == 1:
            component = observations[0][1]
            marginal = joint.marginal(component)
            return BlockPlan(
                block_index, BETA_MARGINAL, observations,
                beta_approx=beta_moment_match(marginal.mu, marginal.sigma2),
            )

    raise ImportanceSamplingError(
        f"Sin distribución de importancia para {sorted(k.value for k in kinds)} sobre {block.names}"
    )


class ImportancePlan:
    """Plan validado al construir el modelo: qué bloques se condicionan y cómo."""

    def __init__(self, registry, prior_blocks, channels):
        self.registry = registry
        self.prior_blocks = tuple(prior_blocks)
        self.channels = tuple(channels)
        self._block_columns = [
            [registry.index(name) for name in block.names] for block in self.prior_blocks
        ]
        owner = {name: (b, block.names.index(name)) for b, block in enumerate(self.prior_blocks) for name in block.names}

        observed_by_block = {}
        for position, channel in enumerate(self.channels):
            if channel.parameter not in owner:
                raise ImportanceSamplingError(f"Canal sobre parámetro desconocido: {channel.parameter}")
            b, component = owner[channel.parameter]
            observed_by_block.setdefault(b, []).append((position, component, channel))

        self.block_plans = tuple(
            _plan_block(b, self.prior_blocks[b], observed)
            for b, observed in sorted(observed_by_block.items())
        )
        self.layout, self._slots = self._build_layout()
        logger.debug(
            "Plan de importancia: %s",
            ", ".join(f"{self.prior_blocks[p.block_index].names}->{p.kind}" for p in self.block_plans) or "prior",
        )

    def _build_layout(self):
        """q^Y por lotes; None si algún bloque no informado no tiene forma por lotes."""
        layout = BatchedBlocks(len(self.registry))
        planned = {plan.block_index: plan for plan in self.block_plans}
        slots = {}
        for b, (block, columns) in enumerate(zip(self.prior_blocks, self._block_columns)):
            plan = planned.get(b)
            if plan is not None:
                slots[b] = plan.add_to_layout(layout, block, columns, self.channels)
            elif not layout.add_distribution(columns, block.distribution):
                return None, {}
        return layout, slots

    @property
    def informed_names(self):
        return tuple(name for plan in self.block_plans for name in self.prior_blocks[plan.block_index].names)

    def sampler(self, y):
        if y.dimension != len(self.channels):
            raise ModelError(f"Observación de dimensión {y.dimension}, se esperaban {len(self.channels)}")
        proposals = {
            plan.block_index: plan.proposal(self.prior_blocks[plan.block_index], self.channels, y.values)
            for plan in self.block_plans
        }
        return ImportanceSampler(self.registry, self.prior_blocks, self._block_columns, proposals)

    # --- LOTES: un Y por fila ---
    def batch_parameters(self, ys):
        """Medias gaussianas {bloque: (B, k)} y parámetros Beta (B, n_beta) de q^Y para cada fila."""
        ys = np.asarray(ys, dtype=float)
        if ys.ndim != 2 or ys.shape[1] != len(self.channels):
            raise ModelError(f"Lote de observaciones con forma {ys.shape}, se esperaban {len(self.channels)} columnas")
        means = {}
        beta_a = np.tile(self.layout.beta_a, (len(ys), 1))
        beta_b = np.tile(self.layout.beta_b, (len(ys), 1))
        for plan in self.block_plans:
            block = self.prior_blocks[plan.block_index]
            slot = self._slots[plan.block_index]
            if plan.kind == GAUSSIAN:
                means[slot] = plan.batch_means(block, self.channels, ys)
            else:
                beta_a[:, slot], beta_b[:, slot] = plan.batch_beta(block, self.channels, ys)
        return means, beta_a, beta_b

    def log_weight_batch(self, ys, values, parameters=None):
        """log pi0 - log q^Y para valores (B, M, k), sumado sobre los bloques informados."""
        means, beta_a, beta_b = parameters or self.batch_parameters(ys)
        count, size, _ = values.shape
        total = np.zeros((count, size))
        for plan in self.block_plans:
            b = plan.block_index
            block = self.prior_blocks[b]
            slot = self._slots[b]
            block_values = values[..., self._block_columns[b]]
            log_p = block.log_density(block_values.reshape(count * size, -1)).reshape(count, size)
            if plan.kind == GAUSSIAN:
                log_q = plan.batch_log_density(block, block_values, mean=means[slot],
                                               cholesky=self.layout.normal_slots[slot].cholesky)
            else:
                log_q = plan.batch_log_density(block, block_values, beta=(beta_a[:, slot], beta_b[:, slot]))
            with np.errstate(invalid='ignore'):
                total = total + np.where(np.isfinite(log_q), log_p - log_q, -np.inf)
        return total

    def sample_batch(self, ys, size, rngs):
        """Muestras de q^Y (B, size, k), un flujo por fila, y sus log pi0/q."""
        parameters = self.batch_parameters(ys)
        values = self.layout.sample(rngs, size, *parameters)
        return values, self.log_weight_batch(ys, values, parameters)


class ImportanceSampler:
    """q^Y: bloques informados desde su propuesta, el resto desde el prior."""

    def __init__(self, registry, prior_blocks, block_columns, proposals):
        self.registry = registry
        self.prior_blocks = prior_blocks
        self.block_columns = block_columns
        self.proposals = proposals

    def sample(self, rng, size):
        values = np.empty((size, len(self.registry)))
        for b, (block, columns) in enumerate(zip(self.prior_blocks, self.block_columns)):
            source = self.proposals.get(b, block)
            values[:, columns] = source.sample(rng, size)
        return ThetaSample(self.registry, values)

    def log_weight(self, theta):
        """log pi0(theta) - log q^Y(theta), sumado solo sobre los bloques informados."""
        total = np.zeros(len(theta))
        for b, proposal in self.proposals.items():
            values = theta.values[:, self.block_columns[b]]
            log_q = proposal.log_density(values)
            log_p = self.prior_blocks[b].log_density(values)
            with np.errstate(invalid='ignore'):
                total = total + np.where(np.isfinite(log_q), log_p - log_q, -np.inf)
        return total


def build_importance_sampler(model, scenario, y):
    """q^Y para el modelo y los canales del escenario."""
    plan = ImportancePlan(model.registry, model.prior_blocks, scenario.channels)
    return plan.sampler(y)


# --- DIAGNÓSTICO ---
def inner_log_terms(model, y, m, rng, use_importance_sampling=True):
    """Muestras internas y log[rho(Y|theta) pi0/q] para un Y dado."""
    sampler = model.importance_sampler(y) if use_importance_sampling else None
    if sampler is None:
        theta = model.sample_prior(rng, m)
        return theta, model.log_likelihood(y, theta)
    theta = sampler.sample(rng, m)
    return theta, model.log_likelihood(y, theta) + sampler.log_weight(theta)


def denominator_cv(model, y, m, rng, use_importance_sampling=True):
    """Coeficiente de variación de los términos rho(Y|theta) pi0/q del denominador."""
    _, log_terms = inner_log_terms(model, y, m, rng, use_importance_sampling)
    shift = np.max(log_terms)
    if not np.isfinite(shift):
        raise DegenerateLikelihoodError("Todos los pesos del denominador son cero")
    terms = np.exp(log_terms - shift)
    return float(np.std(terms, ddof=1) / np.mean(terms))
