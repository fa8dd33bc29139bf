# -*- coding: utf-8 -*-
"""Modelo de decisión e información: prior de theta, beneficios netos f_d,
canales de observación Y = h(theta) + ruido, verosimilitud y EVPI por Monte Carlo.

Convención de formas: un ThetaSample guarda siempre una matriz (m, k) con m
muestras de los k parámetros del registro, de modo que una sola muestra es
simplemente m = 1. Los beneficios netos de un lote son una matriz (m, |D|).
"""

from __future__ import annotations

import enum
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .distributions import BatchedBlocks, MvTransformedNormal, binomial_log_pmf
from .exceptions import ModelError

logger = logging.getLogger(__name__)

INTEGRALITY_TOLERANCE = 1e-9


class ParameterKind(enum.Enum):
    REAL = 'real'
    PROBABILITY = 'probability'
    POSITIVE = 'positive'


class ParameterRegistry:
    """Nombres de parámetros en orden fijo (nombre -> índice)."""

    def __init__(self, names, kinds=None):
        self.names = tuple(names)
        if len(set(self.names)) != len(self.names):
            raise ModelError(f"Nombres de parámetros repetidos: {self.names}")
        self._index = {name: i for i, name in enumerate(self.names)}
        kinds = kinds or {}
        self.kinds = {name: ParameterKind(kinds.get(name, 'real')) for name in self.names}

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"Parámetro desconocido: {name}") from None

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self._index

    def __iter__(self):
        return iter(self.names)


@dataclass(frozen=True, eq=False)
class ThetaSample:
    registry: ParameterRegistry
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != len(self.registry):
            raise ModelError(
                f"Se esperaban {len(self.registry)} parámetros por muestra, llegaron {values.shape[1]}"
            )
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_mapping(cls, registry, mapping):
        """Una muestra a partir de {nombre: valor}; todos los nombres son obligatorios."""
        missing = [name for name in registry if name not in mapping]
        if missing:
            raise ModelError(f"Faltan parámetros: {missing}")
        return cls(registry, np.array([[float(mapping[name]) for name in registry]]))

    def __getitem__(self, name):
        return self.values[:, self.registry.index(name)]

    def __len__(self):
        return self.values.shape[0]

    def replace(self, **columns):
        """Copia con algunas columnas sustituidas (útil para pruebas de sensibilidad)."""
        values = self.values.copy()
        for name, column in columns.items():
            values[:, self.registry.index(name)] = column
        return ThetaSample(self.registry, values)

    def validate(self):
        for name, kind in self.registry.kinds.items():
            column = self[name]
            if kind is ParameterKind.PROBABILITY and not np.all((column > 0) & (column < 1)):
                raise ModelError(f"{name} debe estar en (0, 1)")
            if kind is ParameterKind.POSITIVE and not np.all(column > 0):
                raise ModelError(f"{name} debe ser estrictamente positivo")
        return self


@dataclass(frozen=True, eq=False)
class Observation:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', np.atleast_1d(np.asarray(self.values, dtype=float)))

    @property
    def dimension(self):
        return self.values.shape[0]

    def __getitem__(self, index):
        return self.values[index]


@dataclass(frozen=True)
class PriorBlock:
    """Grupo de parámetros con distribución conjunta (un solo nombre si es univariada)."""

    names: tuple
    distribution: object

    @property
    def is_joint(self):
        return isinstance(self.distribution, MvTransformedNormal)

    def sample(self, rng, size):
        draws = self.distribution.sample(rng, size)
        return np.asarray(draws, dtype=float).reshape(size, len(self.names))

    def log_density(self, values):
        values = np.asarray(values, dtype=float)
        if self.is_joint:
            return self.distribution.log_density(values)
        return self.distribution.log_density(values[:, 0])


# --- CANALES DE OBSERVACIÓN ---
class ChannelKind(enum.Enum):
    GAUSSIAN = 'gaussian'          # Y ~ N(theta_i, var)
    GAUSSIAN_LOG = 'gaussian_log'  # Y ~ N(log theta_i, var)
    BINOMIAL = 'binomial'          # Y ~ Binomial(n, theta_i)


@dataclass(frozen=True)
class Channel:
    kind: ChannelKind
    parameter: str
    variance: float = None
    trials: int = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', ChannelKind(self.kind))
        if self.kind is ChannelKind.BINOMIAL:
            if self.trials is None or int(self.trials) != self.trials or self.trials < 1:
                raise ModelError(f"Canal binomial sobre {self.parameter} necesita trials >= 1")
        elif not (self.variance is not None and self.variance > 0):
            raise ModelError(f"Canal gaussiano sobre {self.parameter} necesita varianza > 0")

    def observed_point(self, column):
        """h(theta) en la escala del canal."""
        return np.log(column) if self.kind is ChannelKind.GAUSSIAN_LOG else column

    def sample(self, column, rng):
        if self.kind is ChannelKind.BINOMIAL:
            return rng.generator.binomial(int(self.trials), column).astype(float)
        return rng.generator.normal(self.observed_point(column), math.sqrt(self.variance))

    def log_likelihood(self, y, column):
        """log rho(y | theta_i); y es un escalar o un arreglo que se difunde contra column."""
        y = np.asarray(y, dtype=float)
        if self.kind is ChannelKind.BINOMIAL:
            if np.any(np.abs(y - np.round(y)) > INTEGRALITY_TOLERANCE):
                raise ModelError(f"Conteo binomial no entero para {self.parameter}: {y}")
            return binomial_log_pmf(np.round(y), self.trials, column)
        residual = y - self.observed_point(column)
        return -0.5 * (math.log(2.0 * math.pi * self.variance) + residual ** 2 / self.variance)


# --- ABSTRACCIÓN DEL MODELO DE DECISIÓN ---
class DecisionModel(ABC):
    """Prior, beneficios netos, modelo de información y verosimilitud.

    Las implementaciones son inmutables; todas las operaciones son puras dada
    la RandomSource que reciben.
    """

    registry: ParameterRegistry
    decision_count: int
    observation_dim: int

    @property
    def f_max(self):
        """Cota declarada de |f_d| para diagnósticos (None = sin cota)."""
        return None

    @abstractmethod
    def sample_prior(self, rng, size):
        """ThetaSample con `size` muestras i.i.d. del prior."""

    @abstractmethod
    def net_benefits(self, theta):
        """Matriz (m, |D|) con f_d(theta) para cada muestra y decisión."""

    @abstractmethod
    def sample_observation(self, theta, rng):
        """Observation ~ rho(. | theta) para una única muestra theta."""

    @abstractmethod
    def log_likelihood(self, y, theta):
        """Vector (m,) con log rho(y | theta) para cada muestra."""

    def importance_sampler(self, y):
        """Distribución de importancia q^Y, o None para muestrear del prior."""
        return None

    def sample_marginal_observation(self, rng):
        """Y marginal: theta del prior y luego Y | theta."""
        theta = self.sample_prior(rng, 1)
        return self.sample_observation(theta, rng)

    def check_observation(self, y):
        if y.dimension != self.observation_dim:
            raise ModelError(
                f"La observación tiene dimensión {y.dimension}, el modelo espera {self.observation_dim}"
            )

    # --- LOTES DE MUESTRAS EXTERNAS ---
    # Una fila por flujo. Las versiones genéricas recorren los flujos uno a uno;
    # ChannelModel las reemplaza por cálculos vectorizados sobre todo el lote.
    def sample_observations(self, rngs):
        """Un Y marginal por flujo, como matriz (B, dim)."""
        return np.stack([self.sample_marginal_observation(rng).values for rng in rngs])

    def sample_inner(self, ys, size, rngs, use_importance_sampling=True):
        """`size` muestras internas por Y: valores (B, size, k) y log[rho(Y|theta) pi0/q] (B, size)."""
        values = np.empty((len(rngs), size, len(self.registry)))
        log_weights = np.empty((len(rngs), size))
        for i, (y_values, rng) in enumerate(zip(ys, rngs)):
            y = Observation(y_values)
            sampler = self.importance_sampler(y) if use_importance_sampling else None
            theta = sampler.sample(rng, size) if sampler is not None else self.sample_prior(rng, size)
            log_w = self.log_likelihood(y, theta)
            if sampler is not None:
                log_w = log_w + sampler.log_weight(theta)
            values[i] = theta.values
            log_weights[i] = log_w
        return values, log_weights

    def net_benefits_batch(self, values):
        """f_d para un arreglo (B, M, k): matriz (B, M, |D|)."""
        count, size, width = values.shape
        f = self.net_benefits(ThetaSample(self.registry, values.reshape(count * size, width)))
        return f.reshape(count, size, -1)


class ChannelModel(DecisionModel):
    """Modelo cuyo prior son bloques independientes y cuya información son canales."""

    def __init__(self, registry, prior_blocks, channels, importance_plan=None):
        self.registry = registry
        self.prior_blocks = tuple(prior_blocks)
        self.channels = tuple(channels)
        self.observation_dim = len(self.channels)
        self.importance_plan = importance_plan
        covered = [name for block in self.prior_blocks for name in block.names]
        if sorted(covered) != sorted(registry.names):
            raise ModelError("Los bloques del prior deben cubrir cada parámetro exactamente una vez")
        self._block_columns = [
            [registry.index(name) for name in block.names] for block in self.prior_blocks
        ]
        self._channel_columns = [registry.index(channel.parameter) for channel in self.channels]

        layout = BatchedBlocks(len(registry))
        supported = all(
            layout.add_distribution(columns, block.distribution)
            for block, columns in zip(self.prior_blocks, self._block_columns)
        )
        self._prior_layout = layout if supported else None
        self._gaussian_positions = [
            p for p, channel in enumerate(self.channels) if channel.kind is not ChannelKind.BINOMIAL
        ]
        self._binomial_positions = [
            p for p, channel in enumerate(self.channels) if channel.kind is ChannelKind.BINOMIAL
        ]
        self._noise_scales = np.array([math.sqrt(self.channels[p].variance) for p in self._gaussian_positions])
        self._trials = np.array([self.channels[p].trials for p in self._binomial_positions], dtype=np.int64)

    def sample_prior(self, rng, size):
        values = np.empty((size, len(self.registry)))
        for block, columns in zip(self.prior_blocks, self._block_columns):
            values[:, columns] = block.sample(rng, size)
        return ThetaSample(self.registry, values)

    def sample_observation(self, theta, rng):
        if len(theta) != 1:
            raise ModelError("sample_observation recibe una única muestra de theta")
        values = [float(channel.sample(theta[channel.parameter], rng)[0]) for channel in self.channels]
        return Observation(np.array(values))

    def log_likelihood(self, y, theta):
        self.check_observation(y)
        return self.log_likelihood_batch(y.values[None, :], theta.values[None, :, :])[0]

    def log_likelihood_batch(self, ys, values):
        """log rho(Y_b | theta_bm) para ys (B, dim) y valores (B, M, k): matriz (B, M)."""
        total = np.zeros(values.shape[:2])
        for position, (channel, column) in enumerate(zip(self.channels, self._channel_columns)):
            total = total + channel.log_likelihood(ys[:, position, None], values[..., column])
        return total

    def importance_sampler(self, y):
        if self.importance_plan is None:
            return None
        return self.importance_plan.sampler(y)

    # --- LOTES VECTORIZADOS ---
    def sample_observations(self, rngs):
        if self._prior_layout is None:
            return super().sample_observations(rngs)
        theta = self._prior_layout.sample(rngs, 1)[:, 0, :]
        ys = np.empty((len(rngs), len(self.channels)))
        gaussian, binomial = self._gaussian_positions, self._binomial_positions
        centers = np.column_stack([
            self.channels[p].observed_point(theta[:, self._channel_columns[p]]) for p in gaussian
        ]) if gaussian else None
        probabilities = theta[:, [self._channel_columns[p] for p in binomial]]
        for i, rng in enumerate(rngs):
            if gaussian:
                ys[i, gaussian] = centers[i] + self._noise_scales * rng.generator.standard_normal(len(gaussian))
            if binomial:
                ys[i, binomial] = rng.generator.binomial(self._trials, probabilities[i])
        return ys

    def sample_inner(self, ys, size, rngs, use_importance_sampling=True):
        ys = np.asarray(ys, dtype=float)
        if ys.ndim != 2 or ys.shape[1] != self.observation_dim:
            raise ModelError(f"Lote de observaciones con forma {ys.shape}, se esperaban {self.observation_dim} columnas")
        plan = self.importance_plan if use_importance_sampling else None
        if self._prior_layout is None or (plan is not None and plan.layout is None):
            return super().sample_inner(ys, size, rngs, use_importance_sampling)
        if plan is None:
            values = self._prior_layout.sample(rngs, size)
            return values, self.log_likelihood_batch(ys, values)
        values, log_ratio = plan.sample_batch(ys, size, rngs)
        return values, self.log_likelihood_batch(ys, values) + log_ratio


# --- OPERACIONES PÚBLICAS ---
def net_benefit(model, d, theta):
    """f_d(theta) para cada muestra del lote; d es un índice 0..|D|-1."""
    if not (isinstance(d, (int, np.integer)) and 0 <= d < model.decision_count):
        raise ModelError(f"Índice de decisión inválido: {d} (hay {model.decision_count})")
    return model.net_benefits(theta)[:, d]


def sample_observation(model, theta, rng):
    return model.sample_observation(theta, rng)


def log_likelihood(model, y, theta):
    return model.log_likelihood(y, theta)


@dataclass(frozen=True)
class EvpiEstimate:
    estimate: float
    std_error: float
    first_term_std_error: float
    optimal_decision: int
    n_samples: int
    repetitions: int = 1
    repetition_std_error: float = None


def _evpi_sums(model, n, rng, chunk_size):
    """Acumuladores exactos por bloques: sum max_d f, sum (max f - f_d) y sus cuadrados."""
    d_count = model.decision_count
    sum_max = sum_max2 = 0.0
    sum_gap = np.zeros(d_count)
    sum_gap2 = np.zeros(d_count)
    for chunk, start in enumerate(range(0, n, chunk_size)):
        size = min(chunk_size, n - start)
        f = model.net_benefits(model.sample_prior(rng.stream(chunk), size))
        f_max = f.max(axis=1)
        gap = f_max[:, None] - f
        sum_max += f_max.sum()
        sum_max2 += np.dot(f_max, f_max)
        sum_gap += gap.sum(axis=0)
        sum_gap2 += (gap ** 2).sum(axis=0)
    return sum_max, sum_max2, sum_gap, sum_gap2


def estimate_evpi(model, n, rng, chunk_size=100_000, repetitions=1):
    """EVPI = (1/N) sum max_d f_d - max_d (1/N) sum f_d con las mismas muestras.

    El estimador se calcula como min_d (1/N) sum (max f - f_d), que es
    algebraicamente igual y no negativo también en aritmética flotante.
    `std_error` es el error estándar de la diferencia max f - f_{d*}, con d*
    la mejor decisión a priori. Con repetitions > 1 los errores estándar usan
    las n·repetitions muestras juntas y se informa además el error estándar
    entre repeticiones.
    """
    if n < 2:
        raise ModelError(f"estimate_evpi necesita n >= 2, no {n}")
    if repetitions < 1:
        raise ModelError(f"repetitions debe ser >= 1, no {repetitions}")

    estimates = []
    total_max = total_max2 = 0.0
    total_gap = np.zeros(model.decision_count)
    total_gap2 = np.zeros(model.decision_count)
    for rep in range(repetitions):
        source = rng.stream(rep) if repetitions > 1 else rng
        sum_max, sum_max2, sum_gap, sum_gap2 = _evpi_sums(model, n, source, chunk_size)
        estimates.append(float(sum_gap[int(np.argmin(sum_gap))] / n))
        total_max += sum_max
        total_max2 += sum_max2
        total_gap += sum_gap
        total_gap2 += sum_gap2

    count = n * repetitions
    best = int(np.argmin(total_gap))
    mean_gap = total_gap[best] / count
    gap_var = max((total_gap2[best] - count * mean_gap ** 2) / (count - 1), 0.0)
    first_var = max((total_max2 - total_max ** 2 / count) / (count - 1), 0.0)
    result = EvpiEstimate(
        estimate=float(np.mean(estimates)),
        std_error=math.sqrt(gap_var / count),
        first_term_std_error=math.sqrt(first_var / count),
        optimal_decision=best,
        n_samples=n,
        repetitions=repetitions,
        repetition_std_error=(
            float(np.std(estimates, ddof=1) / math.sqrt(repetitions)) if repetitions > 1 else None
        ),
    )
    logger.info("✅ EVPI estimado: %.4f (error estándar %.4f, N=%d)", result.estimate, result.std_error, n)
    return result


def calibrate_f_max(model, n, rng, quantile=1.0 - 1e-6):
    """Cuantil empírico de max_d |f_d| usado como F_max en los diagnósticos."""
    f = model.net_benefits(model.sample_prior(rng, n))
    return float(np.quantile(np.abs(f).max(axis=1), quantile))
