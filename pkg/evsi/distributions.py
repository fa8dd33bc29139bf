# -*- coding: utf-8 -*-
"""Muestreo y log-densidades de todas las familias del modelo de costo-efectividad.

Este módulo es la capa más baja del motor. Aquí viven:
1. RandomSource: la fuente aleatoria sembrable, con flujos independientes
   derivados de (semilla, id de flujo) para que cada muestra externa sea
   reproducible sin importar cuántos hilos se usen.
2. Las familias univariadas (normal, log-normal, logit-normal, beta,
   binomial, constante) y la normal multivariada, opcionalmente transformada
   a escala log o logit para los bloques correlacionados.
3. Los momentos de la logit-normal por cuadratura de Gauss-Hermite.

Todas las distribuciones son inmutables y se pueden compartir entre hilos.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaln, expit, gammaln, logit, xlog1py, xlogy

from .exceptions import DistributionError

LOG_2PI = math.log(2.0 * math.pi)
GAUSS_HERMITE_ORDER = 64


# --- FUENTE ALEATORIA: Philox con flujos derivados por SeedSequence ---
class RandomSource:
    """Generador Philox (basado en contador) con derivación de flujos.

    Dos instancias con la misma semilla y el mismo id de flujo producen
    exactamente la misma secuencia. `stream(*keys)` no consume estado del
    padre, así que el orden en que se derivan los flujos no importa.
    """

    __slots__ = ('seed', 'stream_id', 'generator')

    def __init__(self, seed=0, stream_id=()):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise DistributionError(f"La semilla debe ser un entero de 64 bits sin signo, no {seed}")
        self.seed = seed
        self.stream_id = tuple(int(k) for k in stream_id)
        sequence = np.random.SeedSequence(entropy=seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def stream(self, *keys):
        """Flujo independiente identificado por (semilla, id actual + keys)."""
        return RandomSource(self.seed, self.stream_id + tuple(keys))

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, stream_id={self.stream_id})"


def _check_positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise DistributionError(f"{name} debe ser positivo y finito, no {value}")


def _normal_logpdf(x, mu, sigma2):
    return -0.5 * (LOG_2PI + math.log(sigma2) + (x - mu) ** 2 / sigma2)


# --- FAMILIAS UNIVARIADAS ---
@dataclass(frozen=True)
class Normal:
    mu: float
    sigma2: float

    def __post_init__(self):
        _check_positive('sigma2', self.sigma2)

    def sample(self, rng, size=None):
        return rng.generator.normal(self.mu, math.sqrt(self.sigma2), size)

    def log_density(self, x):
        return _normal_logpdf(np.asarray(x, dtype=float), self.mu, self.sigma2)


@dataclass(frozen=True)
class LogNormal:
    """exp(Z) con Z ~ Normal(mu, sigma2)."""

    mu: float
    sigma2: float

    def __post_init__(self):
        _check_positive('sigma2', self.sigma2)

    def sample(self, rng, size=None):
        return np.exp(rng.generator.normal(self.mu, math.sqrt(self.sigma2), size))

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        inside = x > 0
        safe = np.where(inside, x, 1.0)
        log_x = np.log(safe)
        value = _normal_logpdf(log_x, self.mu, self.sigma2) - log_x
        return np.where(inside, value, -np.inf)


@dataclass(frozen=True)
class LogitNormal:
    """logistic(Z) con Z ~ Normal(mu, sigma2)."""

    mu: float
    sigma2: float

    def __post_init__(self):
        _check_positive('sigma2', self.sigma2)

    def sample(self, rng, size=None):
        return expit(rng.generator.normal(self.mu, math.sqrt(self.sigma2), size))

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0) & (x < 1)
        safe = np.where(inside, x, 0.5)
        value = _normal_logpdf(logit(safe), self.mu, self.sigma2) - np.log(safe) - np.log1p(-safe)
        return np.where(inside, value, -np.inf)


@dataclass(frozen=True)
class Beta:
    a: float
    b: float

    def __post_init__(self):
        _check_positive('a', self.a)
        _check_positive('b', self.b)

    @property
    def mean(self):
        return self.a / (self.a + self.b)

    @property
    def variance(self):
        total = self.a + self.b
        return self.a * self.b / (total ** 2 * (total + 1.0))

    def sample(self, rng, size=None):
        return rng.generator.beta(self.a, self.b, size)

    def log_density(self, x):
        return beta_log_density(x, self.a, self.b)


def beta_log_density(x, a, b):
    """Log-densidad Beta(a, b); a y b pueden ser arreglos que se difunden contra x."""
    x = np.asarray(x, dtype=float)
    inside = (x >= 0) & (x <= 1)
    safe = np.where(inside, x, 0.5)
    with np.errstate(divide='ignore'):
        value = xlogy(a - 1.0, safe) + xlog1py(b - 1.0, -safe) - betaln(a, b)
    return np.where(inside, value, -np.inf)


@dataclass(frozen=True)
class Binomial:
    n: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DistributionError(f"n debe ser un entero >= 1, no {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise DistributionError(f"p debe estar en [0, 1], no {self.p}")

    def sample(self, rng, size=None):
        draws = rng.generator.binomial(int(self.n), self.p, size)
        return np.asarray(draws, dtype=float) if size is not None else float(draws)

    def log_density(self, x):
        return binomial_log_pmf(x, self.n, self.p)


@dataclass(frozen=True)
class Constant:
    c: float

    def sample(self, rng, size=None):
        return float(self.c) if size is None else np.full(size, float(self.c))

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x == self.c, 0.0, -np.inf)


UnivariateDist = Union[Normal, LogNormal, LogitNormal, Beta, Binomial, Constant]


def binomial_log_pmf(k, n, p):
    """log P(K = k) para K ~ Binomial(n, p), incluido el coeficiente binomial.

    Acepta p vectorial (una probabilidad por muestra interna). Valores de k
    no enteros o fuera de 0..n devuelven -inf.
    """
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    inside = (k >= 0) & (k <= n) & (k == np.round(k))
    safe = np.where(inside, k, 0.0)
    log_choose = gammaln(n + 1.0) - gammaln(safe + 1.0) - gammaln(n - safe + 1.0)
    with np.errstate(divide='ignore'):
        value = log_choose + xlogy(safe, p) + xlog1py(n - safe, -p)
    return np.where(inside, value, -np.inf)


def sample(dist, rng, size=None):
    """Una muestra (o `size` muestras) de cualquier familia univariada."""
    return dist.sample(rng, size)


def log_density(dist, x):
    """Log-densidad (continuas) o log-masa (binomial); -inf fuera del soporte."""
    return dist.log_density(x)


# --- NORMAL MULTIVARIADA ---
@dataclass(frozen=True, eq=False)
class MvNormalParams:
    mean: np.ndarray
    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        k = mean.shape[0]
        if mean.ndim != 1 or covariance.shape != (k, k):
            raise DistributionError(
                f"Dimensiones incompatibles: media {mean.shape}, covarianza {covariance.shape}"
            )
        if not np.allclose(covariance, covariance.T, rtol=1e-12, atol=0.0):
            raise DistributionError("La covarianza no es simétrica")
        try:
            chol = np.linalg.cholesky(covariance)
        except np.linalg.LinAlgError as exc:
            raise DistributionError(f"La covarianza no es definida positiva: {covariance.tolist()}") from exc
        mean.setflags(write=False)
        covariance.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'covariance', covariance)
        object.__setattr__(self, 'cholesky', chol)

    @property
    def dimension(self):
        return self.mean.shape[0]


def sample_mvn(params, rng, size=None):
    """Media + L·z con L el factor de Cholesky y z normales estándar independientes."""
    shape = (params.dimension,) if size is None else (size, params.dimension)
    z = rng.generator.standard_normal(shape)
    return params.mean + z @ params.cholesky.T


def mvn_log_density(params, x):
    x = np.asarray(x, dtype=float)
    diff = np.atleast_2d(x - params.mean)
    solved = solve_triangular(params.cholesky, diff.T, lower=True)
    quad = np.sum(solved ** 2, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(params.cholesky)))
    value = -0.5 * (params.dimension * LOG_2PI + log_det + quad)
    return value if x.ndim > 1 else value[0]


def mvn_log_density_rows(x, mean, cholesky):
    """Log-densidad normal de x (..., k) con medias que se difunden contra x y un Cholesky común."""
    diff = np.asarray(x, dtype=float) - mean
    k = diff.shape[-1]
    solved = solve_triangular(cholesky, diff.reshape(-1, k).T, lower=True)
    quad = np.sum(solved ** 2, axis=0).reshape(diff.shape[:-1])
    log_det = 2.0 * np.sum(np.log(np.diag(cholesky)))
    return -0.5 * (k * LOG_2PI + log_det + quad)


class Link(enum.Enum):
    """Escala en la que un bloque de parámetros es conjuntamente normal."""

    IDENTITY = 'identity'
    LOG = 'log'
    LOGIT = 'logit'

    def forward(self, x):
        if self is Link.LOG:
            return np.log(x)
        if self is Link.LOGIT:
            return logit(x)
        return x

    def inverse(self, z):
        if self is Link.LOG:
            return np.exp(z)
        if self is Link.LOGIT:
            return expit(z)
        return z

    def in_support(self, x):
        if self is Link.LOG:
            return x > 0
        if self is Link.LOGIT:
            return (x > 0) & (x < 1)
        return np.isfinite(x)

    def log_jacobian(self, x):
        """log |dz/dx| por componente."""
        if self is Link.LOG:
            return -np.log(x)
        if self is Link.LOGIT:
            return -np.log(x) - np.log1p(-x)
        return np.zeros_like(x)


@dataclass(frozen=True, eq=False)
class MvTransformedNormal:
    """Vector X con link(X) ~ Normal(mean, covariance).

    Con Link.LOG es la log-normal multivariada de las razones de odds y con
    Link.LOGIT la logit-normal de las probabilidades de efecto secundario.
    """

    params: MvNormalParams
    link: Link = Link.IDENTITY

    @property
    def dimension(self):
        return self.params.dimension

    def sample(self, rng, size=None):
        return self.link.inverse(sample_mvn(self.params, rng, size))

    def log_density(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.all(self.link.in_support(x), axis=1)
        safe = np.where(inside[:, None], x, self._interior_point())
        value = mvn_log_density(self.params, self.link.forward(safe))
        value = value + np.sum(self.link.log_jacobian(safe), axis=1)
        return np.where(inside, value, -np.inf)

    def marginal(self, index):
        """Distribución univariada de la componente `index`."""
        mu = float(self.params.mean[index])
        sigma2 = float(self.params.covariance[index, index])
        family = {Link.IDENTITY: Normal, Link.LOG: LogNormal, Link.LOGIT: LogitNormal}[self.link]
        return family(mu, sigma2)

    def _interior_point(self):
        return self.link.inverse(self.params.mean)


def as_block_distribution(dist):
    """Reescribe una normal/log-normal/logit-normal univariada como bloque 1-D."""
    if isinstance(dist, MvTransformedNormal):
        return dist
    links = {Normal: Link.IDENTITY, LogNormal: Link.LOG, LogitNormal: Link.LOGIT}
    link = links.get(type(dist))
    if link is None:
        return None
    return MvTransformedNormal(MvNormalParams([dist.mu], [[dist.sigma2]]), link)


# --- MUESTREO POR LOTES ---
@dataclass(frozen=True, eq=False)
class _NormalSlot:
    columns: tuple
    link: Link
    mean: np.ndarray
    cholesky: np.ndarray
    offset: int


class BatchedBlocks:
    """Bloques independientes muestreados para un lote de muestras externas.

    Cada muestra externa tiene su propio flujo y hace a lo sumo dos llamadas
    al generador: normales estándar para todos los bloques normales y betas
    para todas las columnas beta. Las medias de los bloques normales y los
    parámetros de las betas pueden variar por muestra externa; el Cholesky de
    cada bloque es común a todo el lote. Se arma una vez y luego es de solo
    lectura.
    """

    def __init__(self, width):
        self.width = width
        self.normal_slots = []
        self.normal_dim = 0
        self.beta_columns = []
        self.beta_a = []
        self.beta_b = []
        self.constant_columns = []
        self.constant_values = []

    def add_normal(self, columns, link, mean, covariance):
        params = MvNormalParams(mean, covariance)
        self.normal_slots.append(_NormalSlot(tuple(columns), link, params.mean, params.cholesky, self.normal_dim))
        self.normal_dim += params.dimension
        return len(self.normal_slots) - 1

    def add_beta(self, column, a, b):
        self.beta_columns.append(column)
        self.beta_a.append(float(a))
        self.beta_b.append(float(b))
        return len(self.beta_columns) - 1

    def add_distribution(self, columns, dist):
        """Agrega un bloque del prior; False si la familia no tiene forma por lotes."""
        joint = as_block_distribution(dist)
        if joint is not None:
            self.add_normal(columns, joint.link, joint.params.mean, joint.params.covariance)
        elif isinstance(dist, Beta):
            self.add_beta(columns[0], dist.a, dist.b)
        elif isinstance(dist, Constant):
            self.constant_columns.append(columns[0])
            self.constant_values.append(float(dist.c))
        else:
            return False
        return True

    def sample(self, rngs, size, means=None, beta_a=None, beta_b=None):
        """Arreglo (B, size, width); `means` reemplaza la media de algunos bloques por {bloque: (B, k)}."""
        count = len(rngs)
        n_beta = len(self.beta_columns)
        a = np.broadcast_to(self.beta_a if beta_a is None else beta_a, (count, n_beta))
        b = np.broadcast_to(self.beta_b if beta_b is None else beta_b, (count, n_beta))
        z = np.empty((count, size, self.normal_dim))
        betas = np.empty((count, size, n_beta))
        for i, rng in enumerate(rngs):
            if self.normal_dim:
                z[i] = rng.generator.standard_normal((size, self.normal_dim))
            if n_beta:
                betas[i] = rng.generator.beta(a[i], b[i], (size, n_beta))

        values = np.empty((count, size, self.width))
        means = means or {}
        for index, slot in enumerate(self.normal_slots):
            k = slot.mean.shape[0]
            mean = np.asarray(means.get(index, slot.mean), dtype=float)
            if mean.ndim == 2:
                mean = mean[:, None, :]
            block = mean + z[..., slot.offset:slot.offset + k] @ slot.cholesky.T
            values[..., list(slot.columns)] = slot.link.inverse(block)
        values[..., self.beta_columns] = betas
        values[..., self.constant_columns] = self.constant_values
        return values


# --- MOMENTOS DE LA LOGIT-NORMAL ---
@lru_cache(maxsize=4)
def _hermite_rule(order):
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return nodes, weights / math.sqrt(math.pi)


def logitnormal_moments(mu, sigma2, order=GAUSS_HERMITE_ORDER):
    """Media y varianza de logistic(Z), Z ~ Normal(mu, sigma2).

    Cuadratura de Gauss-Hermite de orden fijo; la varianza se calcula en dos
    pasadas para que no se pierda precisión cuando sigma2 es diminuto.
    """
    _check_positive('sigma2', sigma2)
    nodes, weights = _hermite_rule(order)
    values = expit(mu + math.sqrt(2.0 * sigma2) * nodes)
    mean = float(np.dot(weights, values))
    variance = float(np.dot(weights, (values - mean) ** 2))
    return mean, variance
