# -*- coding: utf-8 -*-
"""Motor MLMC antitético para EVPI - EVSI.

Flujo general:
1. sample_delta_p: un Y marginal, M0·2^l muestras internas (prior o q^Y) y
   la corrección antitética Delta P_l = P_l - (P^(a) + P^(b)) / 2.
   Cada mitad se normaliza con su propio desplazamiento de log-pesos.
2. run_level: acumula n correcciones independientes en un LevelEstimate.
   Cada muestra externa usa su propio flujo (nivel, índice), así que el
   resultado no depende del número de hilos. Los bloques de 64 índices se
   calculan como lotes vectorizados (Y, condicionamiento y densidades).
3. run_mlmc: el algoritmo adaptativo con calentamiento, N_l óptimo y prueba
   de sesgo sobre los últimos tres niveles.
4. convergence_report / run_nested_mc / nested_mc_cost: pruebas de
   convergencia y comparación con Monte Carlo anidado.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DegenerateLikelihoodError, RateRegressionError

logger = logging.getLogger(__name__)

DRAWS_PER_TASK = 64
# tope de muestras internas por lote vectorizado (B · M_l)
BATCH_INNER_SAMPLES = 2 ** 16
RATE_FLOOR = 0.5


@dataclass(frozen=True)
class MlmcConfig:
    eps: float = 1.0
    m0: int = 16
    initial_levels: int = 3
    max_level: int = 16
    initial_samples_per_level: int = 100
    use_importance_sampling: bool = True
    seed: int = 0
    threads: int = None
    retry_cap: int = 100
    # fracción de eps^2 asignada a la varianza; el resto es para el sesgo
    variance_fraction: float = 0.5
    l_min: int = 2

    def __post_init__(self):
        if not (isinstance(self.eps, (int, float)) and self.eps > 0 and math.isfinite(self.eps)):
            raise ConfigError(f"eps debe ser positivo y finito, no {self.eps}")
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise ConfigError(f"M0 debe ser un entero positivo, no {self.m0}")
        if self.initial_levels < 2:
            raise ConfigError(f"initial_levels debe ser >= 2, no {self.initial_levels}")
        if self.max_level < self.initial_levels - 1:
            raise ConfigError("max_level no puede ser menor que el último nivel inicial")
        if self.initial_samples_per_level < 2:
            raise ConfigError("Se necesitan al menos 2 muestras de calentamiento por nivel")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads debe ser >= 1, no {self.threads}")
        if self.retry_cap < 1:
            raise ConfigError(f"retry_cap debe ser >= 1, no {self.retry_cap}")
        if not 0 < self.variance_fraction < 1:
            raise ConfigError("variance_fraction debe estar en (0, 1)")

    def inner_samples(self, level):
        return int(self.m0) * 2 ** level

    @property
    def workers(self):
        return self.threads or os.cpu_count() or 1


# --- ESTIMADOR INTERNO ---
@dataclass(frozen=True)
class WeightedSums:
    """Sumas pesadas de un grupo de muestras internas, una fila por muestra externa.

    Cada grupo lleva su propio desplazamiento `shift` (el máximo de sus
    log-pesos), así que las sumas valen sum_m exp(log w_m - shift) · f_m.
    Un grupo con todos los log-pesos en -inf tiene shift = -inf y no es válido.
    """

    numerators: np.ndarray
    numerator_max: np.ndarray
    denominator: np.ndarray
    shift: np.ndarray
    count: int

    @classmethod
    def of(cls, f, log_weights):
        """f con forma (..., M, |D|) y log-pesos (..., M)."""
        f = np.asarray(f, dtype=float)
        log_weights = np.asarray(log_weights, dtype=float)
        shift = log_weights.max(axis=-1)
        base = np.where(np.isfinite(shift), shift, 0.0)
        weights = np.exp(log_weights - base[..., None])
        # max_d f_d va como columna extra: mismo producto, mismo redondeo que los f_d
        extended = np.concatenate([f, f.max(axis=-1, keepdims=True)], axis=-1)
        sums = np.einsum('...m,...md->...d', weights, extended)
        return cls(sums[..., :-1], sums[..., -1], weights.sum(axis=-1), shift, log_weights.shape[-1])

    @property
    def valid(self):
        return np.isfinite(self.shift)

    def __add__(self, other):
        """Une dos grupos llevando ambos al mayor de los dos desplazamientos."""
        shift = np.maximum(self.shift, other.shift)
        base = np.where(np.isfinite(shift), shift, 0.0)
        mine = np.exp(self.shift - base)
        theirs = np.exp(other.shift - base)
        return WeightedSums(
            self.numerators * mine[..., None] + other.numerators * theirs[..., None],
            self.numerator_max * mine + other.numerator_max * theirs,
            self.denominator * mine + other.denominator * theirs,
            shift,
            self.count + other.count,
        )

    def ratios(self):
        """(g_max, g_d); NaN en las filas no válidas."""
        with np.errstate(divide='ignore', invalid='ignore'):
            return self.numerator_max / self.denominator, self.numerators / self.denominator[..., None]

    def level_values(self):
        """P = g_max - max_d g_d por fila."""
        g_max, g_d = self.ratios()
        return g_max - g_d.max(axis=-1)


def inner_estimate(model, y, thetas, log_weights):
    """(g_max, g_d) autonormalizados con los log-pesos log[rho(Y|theta) pi0/q]."""
    if len(thetas) == 0 or len(thetas) != len(log_weights):
        raise ConfigError("thetas y log_weights deben ser no vacíos y del mismo largo")
    model.check_observation(y)
    sums = WeightedSums.of(model.net_benefits(thetas), log_weights)
    if not sums.valid:
        raise DegenerateLikelihoodError("Todos los log-pesos internos son -inf")
    g_max, g_d = sums.ratios()
    return float(g_max), g_d


def level_values(level, f, log_weights):
    """P_l y Delta P_l = P_l - (P^(a) + P^(b)) / 2 para cada fila de un lote.

    f tiene forma (B, M_l, |D|) y log_weights (B, M_l). Devuelve
    (delta_p, p_fine, p_a, p_b, ok); en el nivel 0 p_a y p_b son None.
    ok es False en las filas con una mitad (o el grupo entero en el nivel 0)
    sin ningún log-peso finito.
    """
    if level == 0:
        pooled = WeightedSums.of(f, log_weights)
        p = pooled.level_values()
        return p, p, None, None, pooled.valid
    half = log_weights.shape[-1] // 2
    sums_a = WeightedSums.of(f[..., :half, :], log_weights[..., :half])
    sums_b = WeightedSums.of(f[..., half:, :], log_weights[..., half:])
    p_a = sums_a.level_values()
    p_b = sums_b.level_values()
    p_fine = (sums_a + sums_b).level_values()
    return p_fine - 0.5 * (p_a + p_b), p_fine, p_a, p_b, sums_a.valid & sums_b.valid


def draw_inner_terms(model, ys, size, config, rngs, duplicate_halves=False):
    """f (B, size, |D|) y log-pesos (B, size) de las muestras internas de cada fila de ys."""
    use_is = config.use_importance_sampling
    if duplicate_halves:
        values, log_weights = model.sample_inner(ys, size // 2, rngs, use_is)
        values = np.concatenate([values, values], axis=1)
        log_weights = np.concatenate([log_weights, log_weights], axis=1)
    else:
        values, log_weights = model.sample_inner(ys, size, rngs, use_is)
    return model.net_benefits_batch(values), log_weights


@dataclass(frozen=True)
class LevelDraw:
    level: int
    delta_p: float
    p_fine: float
    p_half_a: float = None
    p_half_b: float = None
    resamples: int = 0


@dataclass(frozen=True)
class LevelDraws:
    """Correcciones de un lote de muestras externas del mismo nivel (arreglos (B,))."""

    level: int
    delta_p: np.ndarray
    p_fine: np.ndarray
    p_half_a: np.ndarray
    p_half_b: np.ndarray
    resamples: np.ndarray

    def __len__(self):
        return len(self.delta_p)

    def draw(self, index):
        halves = (None, None) if self.p_half_a is None else (float(self.p_half_a[index]), float(self.p_half_b[index]))
        return LevelDraw(self.level, float(self.delta_p[index]), float(self.p_fine[index]), *halves,
                         int(self.resamples[index]))


def _sample_draws(model, level, config, rngs, duplicate_halves=False):
    """Una corrección por flujo. Los Y con verosimilitud degenerada se vuelven a
    muestrear en su propio flujo, hasta retry_cap intentos."""
    count = len(rngs)
    size = config.inner_samples(level)
    delta, p_fine = np.empty(count), np.empty(count)
    p_a = np.empty(count) if level > 0 else None
    p_b = np.empty(count) if level > 0 else None
    resamples = np.zeros(count, dtype=int)
    pending = np.arange(count)
    for attempt in range(config.retry_cap):
        batch = [rngs[i] for i in pending]
        ys = model.sample_observations(batch)
        f, log_weights = draw_inner_terms(model, ys, size, config, batch, duplicate_halves and level > 0)
        d, p, a, b, ok = level_values(level, f, log_weights)
        done = pending[ok]
        delta[done], p_fine[done] = d[ok], p[ok]
        if level > 0:
            p_a[done], p_b[done] = a[ok], b[ok]
        resamples[done] = attempt
        pending = pending[~ok]
        if len(pending) == 0:
            return LevelDraws(level, delta, p_fine, p_a, p_b, resamples)
        logger.debug("Nivel %d: %d Y con verosimilitud degenerada, reintento %d", level, len(pending), attempt + 1)
    raise DegenerateLikelihoodError(
        f"Verosimilitud degenerada en el nivel {level} tras {config.retry_cap} intentos",
        attempts=config.retry_cap,
    )


def sample_delta_p(model, level, config, rng, duplicate_halves=False):
    """Una corrección antitética Delta P_l; reintenta Y si la verosimilitud degenera.

    Es la misma cuenta que hace run_level para el flujo (nivel, índice).
    Con duplicate_halves=True las dos mitades son idénticas y Delta P_l = 0
    (gancho de prueba de la degeneración antitética).
    """
    if level < 0:
        raise ConfigError(f"El nivel debe ser >= 0, no {level}")
    return _sample_draws(model, level, config, [rng], duplicate_halves).draw(0)


# --- ACUMULADORES POR NIVEL ---
@dataclass
class LevelEstimate:
    level: int
    cost_per_sample: int
    n_samples: int = 0
    sum_dp: float = 0.0
    sum_dp2: float = 0.0
    sum_dp3: float = 0.0
    sum_dp4: float = 0.0
    sum_abs_dp: float = 0.0
    sum_p: float = 0.0
    sum_p2: float = 0.0
    resamples: int = 0
    bound_violations: int = 0

    def add(self, draw, f_max=None):
        dp = draw.delta_p
        self.n_samples += 1
        self.sum_dp += dp
        self.sum_dp2 += dp * dp
        self.sum_dp3 += dp ** 3
        self.sum_dp4 += dp ** 4
        self.sum_abs_dp += abs(dp)
        self.sum_p += draw.p_fine
        self.sum_p2 += draw.p_fine * draw.p_fine
        self.resamples += draw.resamples
        if f_max is not None:
            values = [v for v in (draw.p_fine, draw.p_half_a, draw.p_half_b) if v is not None]
            if any(abs(v) > 2.0 * f_max for v in values):
                self.bound_violations += 1
        return self

    def add_draws(self, draws, f_max=None):
        """Acumula un LevelDraws; cuenta como violación cada fila con |P| > 2 f_max en algún grupo."""
        dp = np.asarray(draws.delta_p, dtype=float)
        p = np.asarray(draws.p_fine, dtype=float)
        self.n_samples += len(dp)
        self.sum_dp += float(np.sum(dp))
        self.sum_dp2 += float(np.sum(dp * dp))
        self.sum_dp3 += float(np.sum(dp ** 3))
        self.sum_dp4 += float(np.sum(dp ** 4))
        self.sum_abs_dp += float(np.sum(np.abs(dp)))
        self.sum_p += float(np.sum(p))
        self.sum_p2 += float(np.sum(p * p))
        self.resamples += int(np.sum(draws.resamples))
        if f_max is not None:
            values = np.array([v for v in (p, draws.p_half_a, draws.p_half_b) if v is not None])
            self.bound_violations += int(np.sum(np.any(np.abs(values) > 2.0 * f_max, axis=0)))
        return self

    def merge(self, other):
        if other.level != self.level:
            raise ConfigError(f"No se pueden combinar los niveles {self.level} y {other.level}")
        return LevelEstimate(
            self.level,
            self.cost_per_sample,
            self.n_samples + other.n_samples,
            self.sum_dp + other.sum_dp,
            self.sum_dp2 + other.sum_dp2,
            self.sum_dp3 + other.sum_dp3,
            self.sum_dp4 + other.sum_dp4,
            self.sum_abs_dp + other.sum_abs_dp,
            self.sum_p + other.sum_p,
            self.sum_p2 + other.sum_p2,
            self.resamples + other.resamples,
            self.bound_violations + other.bound_violations,
        )

    @staticmethod
    def _variance(total, total2, n):
        if n < 2:
            return 0.0
        mean = total / n
        return max((total2 - n * mean * mean) / (n - 1), 0.0)

    @property
    def mean_dp(self):
        return self.sum_dp / self.n_samples if self.n_samples else 0.0

    @property
    def var_dp(self):
        return self._variance(self.sum_dp, self.sum_dp2, self.n_samples)

    @property
    def mean_p(self):
        return self.sum_p / self.n_samples if self.n_samples else 0.0

    @property
    def var_p(self):
        return self._variance(self.sum_p, self.sum_p2, self.n_samples)

    @property
    def kurtosis(self):
        """Curtosis de Delta P_l a partir de las cuatro sumas; 0 si la varianza es nula."""
        n = self.n_samples
        if n < 2:
            return 0.0
        m1 = self.sum_dp / n
        m2 = self.sum_dp2 / n - m1 ** 2
        if m2 <= 0.0:
            return 0.0
        m4 = (self.sum_dp4 / n - 4 * m1 * self.sum_dp3 / n
              + 6 * m1 ** 2 * self.sum_dp2 / n - 3 * m1 ** 4)
        return m4 / m2 ** 2

    @property
    def cost(self):
        return self.n_samples * self.cost_per_sample


def _run_task(model, level, indices, config, rng, f_max):
    """Un bloque de índices, procesado en lotes de a lo sumo BATCH_INNER_SAMPLES muestras internas."""
    estimate = LevelEstimate(level, config.inner_samples(level))
    batch = max(1, BATCH_INNER_SAMPLES // config.inner_samples(level))
    for first in range(0, len(indices), batch):
        rngs = [rng.stream(level, index) for index in indices[first:first + batch]]
        estimate.add_draws(_sample_draws(model, level, config, rngs), f_max)
    return estimate


def _extend_level(model, level, start, n, config, rng, f_max=None):
    """Acumula las muestras start .. start + n - 1 del nivel, en bloques de orden fijo."""
    tasks = [range(first, min(first + DRAWS_PER_TASK, start + n))
             for first in range(start, start + n, DRAWS_PER_TASK)]
    if config.workers == 1 or len(tasks) == 1:
        partials = [_run_task(model, level, indices, config, rng, f_max) for indices in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            partials = list(executor.map(
                lambda indices: _run_task(model, level, indices, config, rng, f_max), tasks
            ))
    result = LevelEstimate(level, config.inner_samples(level))
    for partial in partials:
        result = result.merge(partial)
    return result


def run_level(model, level, n, config, rng, start=0):
    """n correcciones independientes del nivel; determinista para (semilla, nivel, n)."""
    if n < 2:
        raise ConfigError(f"run_level necesita n >= 2, no {n}")
    return _extend_level(model, level, start, n, config, rng, model.f_max)


# --- TASAS alpha Y beta ---
def _slope(levels, values):
    return float(np.polyfit(np.asarray(levels, dtype=float), np.log2(values), 1)[0])


def regress_rates(levels, l_min=2):
    """(alpha, beta) por mínimos cuadrados de log2|media| y log2 var contra l, l >= l_min."""
    usable = [e for e in levels if e.level >= l_min and e.n_samples >= 2
              and abs(e.mean_dp) > 0 and e.var_dp > 0]
    if len(usable) < 2:
        raise RateRegressionError(f"Se necesitan al menos dos niveles utilizables con l >= {l_min}")
    ells = [e.level for e in usable]
    alpha = -_slope(ells, [abs(e.mean_dp) for e in usable])
    beta = -_slope(ells, [e.var_dp for e in usable])
    return alpha, beta


def _reported_rates(levels, l_min):
    for lower in (l_min, 1):
        try:
            return regress_rates(levels, lower)
        except RateRegressionError:
            continue
    return None, None


# --- DRIVER ADAPTATIVO ---
@dataclass
class MlmcRunResult:
    estimate: float
    levels: list
    final_level: int
    samples: list
    alpha_hat: float
    beta_hat: float
    total_cost: int
    converged: bool
    eps: float
    std_error: float
    resamples: int = 0
    bound_violations: int = 0
    config: MlmcConfig = field(default=None, repr=False)

    @property
    def kurtosis(self):
        return [e.kurtosis for e in self.levels]

    def schedule(self):
        """Tabla N_l vs l para este eps."""
        return pd.DataFrame({
            'eps': self.eps,
            'level': [e.level for e in self.levels],
            'n_samples': [e.n_samples for e in self.levels],
        })


def _driver_statistics(levels, alpha, beta):
    """Medias y varianzas con el ajuste para valores diminutos en niveles altos."""
    means = np.array([abs(e.mean_dp) for e in levels])
    variances = np.array([e.var_dp for e in levels])
    for ell in range(2, len(levels)):
        means[ell] = max(means[ell], 0.5 * means[ell - 1] / 2 ** alpha)
        variances[ell] = max(variances[ell], 0.5 * variances[ell - 1] / 2 ** beta)
    return means, variances


def _driver_rates(means, variances, alpha, beta):
    ells = np.arange(1, len(means))
    if len(ells) >= 2 and np.all(means[1:] > 0):
        alpha = max(RATE_FLOOR, -_slope(ells, means[1:]))
    if len(ells) >= 2 and np.all(variances[1:] > 0):
        beta = max(RATE_FLOOR, -_slope(ells, variances[1:]))
    return alpha, beta


def optimal_samples(variances, costs, eps, variance_fraction=0.5):
    """N_l = ceil(sqrt(V_l / C_l) · sum_k sqrt(V_k C_k) / (variance_fraction · eps^2))."""
    variances = np.asarray(variances, dtype=float)
    costs = np.asarray(costs, dtype=float)
    total = np.sum(np.sqrt(variances * costs))
    return np.ceil(np.sqrt(variances / costs) * total / (variance_fraction * eps ** 2)).astype(int)


def bias_converged(means, alpha, eps, variance_fraction=0.5):
    """max_{j<3} |m_{L-j}| 2^{-alpha j} <= (2^alpha - 1) · eps · sqrt(1 - variance_fraction)."""
    last = len(means) - 1
    remainder = max(means[last - j] * 2.0 ** (-alpha * j) for j in range(min(3, len(means))))
    return remainder <= (2.0 ** alpha - 1.0) * eps * math.sqrt(1.0 - variance_fraction)


def run_mlmc(model, config, rng):
    """Estimación adaptativa de EVPI - EVSI con error cuadrático medio <= eps^2."""
    f_max = model.f_max
    last = config.initial_levels - 1
    levels = [LevelEstimate(ell, config.inner_samples(ell)) for ell in range(last + 1)]
    pending = [config.initial_samples_per_level] * len(levels)
    alpha = beta = RATE_FLOOR
    converged = False

    logger.info("⏳ MLMC eps=%g: niveles iniciales 0..%d", config.eps, last)
    while True:
        for ell, extra in enumerate(pending):
            if extra > 0:
                levels[ell] = levels[ell].merge(
                    _extend_level(model, ell, levels[ell].n_samples, int(extra), config, rng, f_max)
                )

        means, variances = _driver_statistics(levels, alpha, beta)
        alpha, beta = _driver_rates(means, variances, alpha, beta)
        costs = [e.cost_per_sample for e in levels]
        targets = optimal_samples(variances, costs, config.eps, config.variance_fraction)
        pending = [max(0, int(t) - e.n_samples) for t, e in zip(targets, levels)]
        if any(pending):
            continue

        if bias_converged(means, alpha, config.eps, config.variance_fraction):
            converged = True
            break
        if last >= config.max_level:
            logger.warning("⚠️ Nivel máximo %d alcanzado sin convergencia del sesgo (eps=%g)",
                           config.max_level, config.eps)
            break
        last += 1
        levels.append(LevelEstimate(last, config.inner_samples(last)))
        pending.append(config.initial_samples_per_level)
        logger.info("Agregando nivel %d (eps=%g)", last, config.eps)

    alpha_hat, beta_hat = _reported_rates(levels, config.l_min)
    result = MlmcRunResult(
        estimate=float(sum(e.mean_dp for e in levels)),
        levels=levels,
        final_level=last,
        samples=[e.n_samples for e in levels],
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        total_cost=int(sum(e.cost for e in levels)),
        converged=converged,
        eps=config.eps,
        std_error=math.sqrt(sum(e.var_dp / e.n_samples for e in levels)),
        resamples=sum(e.resamples for e in levels),
        bound_violations=sum(e.bound_violations for e in levels),
        config=config,
    )
    logger.info("✅ MLMC eps=%g: estimación %.4f, L=%d, costo %d", config.eps, result.estimate, last, result.total_cost)
    return result


# --- MONTE CARLO ANIDADO ---
@dataclass(frozen=True)
class NestedMcResult:
    estimate: float
    std_error: float
    total_cost: int
    level: int
    n_samples: int


def run_nested_mc(model, config, level, n, rng):
    """(1/N) sum P_L sin corrección antitética; costo n·M0·2^L."""
    if n < 2:
        raise ConfigError(f"run_nested_mc necesita n >= 2, no {n}")
    estimate = _extend_level(model, level, 0, n, config, rng)
    return NestedMcResult(
        estimate=estimate.mean_p,
        std_error=math.sqrt(estimate.var_p / n),
        total_cost=n * config.inner_samples(level),
        level=level,
        n_samples=n,
    )


def nested_mc_cost(levels, final_level, eps, m0, variance_fraction=0.5):
    """Costo de MC anidado en el nivel L para la misma meta de varianza: ceil(V[P_L]/(f eps^2))·M0·2^L."""
    variance = next(e.var_p for e in levels if e.level == final_level)
    return int(math.ceil(variance / (variance_fraction * eps ** 2))) * int(m0) * 2 ** final_level


# --- PRUEBAS DE CONVERGENCIA ---
@dataclass
class ConvergenceReport:
    table: pd.DataFrame
    alpha_hat: float
    beta_hat: float
    levels: list


CONVERGENCE_COLUMNS = ['level', 'n_samples', 'mean_p', 'var_p', 'mean_dp', 'var_dp', 'kurtosis', 'cost']


def convergence_report(model, max_level, samples_per_level, config, rng):
    """Tabla por nivel con |media| y varianza de P_l y Delta P_l, curtosis y costo."""
    if samples_per_level < 100:
        raise ConfigError(f"samples_per_level debe ser >= 100, no {samples_per_level}")
    levels = []
    for ell in range(max_level + 1):
        levels.append(run_level(model, ell, samples_per_level, config, rng))
        logger.info("Nivel %d listo: var dP=%.4e", ell, levels[-1].var_dp)

    try:
        alpha_hat, beta_hat = regress_rates(levels, config.l_min)
    except RateRegressionError as exc:
        logger.warning("⚠️ No se pudieron estimar las tasas: %s", exc)
        alpha_hat = beta_hat = None

    table = pd.DataFrame([
        {
            'level': e.level,
            'n_samples': e.n_samples,
            'mean_p': abs(e.mean_p),
            'var_p': e.var_p,
            'mean_dp': abs(e.mean_dp),
            'var_dp': e.var_dp,
            'kurtosis': e.kurtosis,
            'cost': e.cost_per_sample,
        }
        for e in levels
    ], columns=CONVERGENCE_COLUMNS)
    return ConvergenceReport(table, alpha_hat, beta_hat, levels)


# --- DIAGNÓSTICO DE MOMENTOS DE LA VEROSIMILITUD ---
def likelihood_moment_diagnostic(model, p, n_outer, m_inner, rng, use_importance_sampling=False):
    """Estima E_Y E_theta[(rho(Y|theta) pi0/(rho(Y) q))^p] con rho(Y) estimado por las mismas muestras.

    Devuelve (estimación, error estándar entre muestras externas). Solo diagnóstico.
    """
    rngs = [rng.stream(index) for index in range(n_outer)]
    ys = model.sample_observations(rngs)
    _, log_weights = model.sample_inner(ys, m_inner, rngs, use_importance_sampling)
    shift = log_weights.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise DegenerateLikelihoodError("Todos los log-pesos internos de algún Y son -inf")
    weights = np.exp(log_weights - shift)
    values = np.mean((weights / weights.mean(axis=1, keepdims=True)) ** p, axis=1)
    std_error = float(np.std(values, ddof=1) / math.sqrt(n_outer)) if n_outer > 1 else float('nan')
    return float(np.mean(values)), std_error
