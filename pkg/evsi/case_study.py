# -*- coding: utf-8 -*-
"""Modelo de costo-efectividad de 12 parámetros con tres tratamientos.

El prior, las constantes, los tres diseños de estudio y la población
descontada se leen del archivo de configuración `data/case_study.json`, que
viaja con el repositorio y se verifica por checksum en las pruebas.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from .decision import Channel, ChannelModel, ParameterRegistry, PriorBlock, calibrate_f_max
from .distributions import (
    Beta,
    Constant,
    Link,
    LogitNormal,
    LogNormal,
    MvNormalParams,
    MvTransformedNormal,
    Normal,
    RandomSource,
)
from .exceptions import ConfigError, ModelError
from .posterior import ImportancePlan

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent / 'data' / 'case_study.json'
PARAMETER_NAMES = (
    'L', 'Q_E', 'Q_SE', 'C_E', 'C_SE', 'C_T2', 'C_T3', 'P_E1', 'OR_E2', 'OR_E3', 'P_SE2', 'P_SE3',
)
F_MAX_CALIBRATION_SAMPLES = 1_000_000
F_MAX_CALIBRATION_SEED = 0


# --- CARGA DE LA CONFIGURACIÓN ---
@lru_cache(maxsize=8)
def _read_config(path):
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except OSError as exc:
        raise ConfigError(f"No se pudo leer la configuración del modelo {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON inválido en {path}: {exc}") from exc


def load_model_config(path=None):
    """Diccionario con prior, escenarios y población (copia independiente)."""
    config = _read_config(str(path or DEFAULT_CONFIG_PATH))
    return json.loads(json.dumps(config))


def parse_distribution(spec):
    family = spec.get('family')
    try:
        if family == 'normal':
            return Normal(spec['mu'], spec['sigma2'])
        if family == 'lognormal':
            return LogNormal(spec['mu'], spec['sigma2'])
        if family == 'logitnormal':
            return LogitNormal(spec['mu'], spec['sigma2'])
        if family == 'beta':
            return Beta(spec['a'], spec['b'])
        if family == 'constant':
            return Constant(spec['value'])
        if family == 'mvnormal':
            params = MvNormalParams(spec['mean'], spec['covariance'])
            return MvTransformedNormal(params, Link(spec.get('link', 'identity')))
    except KeyError as exc:
        raise ConfigError(f"Falta el campo {exc} en la distribución {family}") from exc
    raise ConfigError(f"Familia de distribución desconocida: {family}")


def build_prior(config):
    """Registro de parámetros y bloques del prior en el orden del archivo."""
    blocks, kinds = [], {}
    for entry in config['prior']:
        names = tuple(entry['names'])
        blocks.append(PriorBlock(names, parse_distribution(entry['distribution'])))
        kinds.update({name: entry.get('kind', 'real') for name in names})
    registry = ParameterRegistry([name for block in blocks for name in block.names], kinds)
    return registry, blocks


# --- ESCENARIOS DE INFORMACIÓN ---
@dataclass(frozen=True)
class Scenario:
    id: int
    patients: int
    study_cost: float
    channels: tuple
    description: str = ''

    @property
    def observation_dim(self):
        return len(self.channels)

    @property
    def informed_parameters(self):
        return tuple(channel.parameter for channel in self.channels)


def build_scenario(scenario_id, config=None, patients=None):
    """Escenario con sus canales; `patients` reemplaza n_p para estudios de sensibilidad."""
    config = config or load_model_config()
    entry = config['scenarios'].get(str(scenario_id))
    if entry is None:
        raise ModelError(f"Escenario desconocido: {scenario_id} (hay {sorted(config['scenarios'])})")
    n_p = int(patients or entry['patients'])
    if n_p < 1:
        raise ModelError(f"El número de pacientes debe ser positivo, no {n_p}")
    channels = []
    for spec in entry['channels']:
        if spec['kind'] == 'binomial':
            channels.append(Channel(spec['kind'], spec['parameter'], trials=n_p))
        else:
            channels.append(Channel(spec['kind'], spec['parameter'], variance=spec['variance_scale'] / n_p))
    return Scenario(
        id=int(scenario_id),
        patients=n_p,
        study_cost=float(entry['study_cost']),
        channels=tuple(channels),
        description=entry.get('description', ''),
    )


def scenario_ids(config=None):
    config = config or load_model_config()
    return tuple(int(key) for key in sorted(config['scenarios']))


def scenario_observation_model(scenario, config=None):
    """Lista de canales del escenario (acepta el id o el Scenario)."""
    if not isinstance(scenario, Scenario):
        scenario = build_scenario(scenario, config)
    return list(scenario.channels)


# --- BENEFICIO NETO ---
def event_probabilities(theta):
    """P_E,d para d = 1, 2, 3 a partir de P_E1 y las razones de odds."""
    p_e1 = theta['P_E1']
    odds = p_e1 / (1.0 - p_e1)
    derived = [theta[name] * odds / (1.0 + theta[name] * odds) for name in ('OR_E2', 'OR_E3')]
    return np.column_stack([p_e1, *derived])


def case_net_benefits(theta, willingness_to_pay=75_000.0, treatment_cost_1=0.0, side_effect_1=0.0):
    """Matriz (m, 3) de beneficios netos."""
    lam = willingness_to_pay
    life = theta['L'][:, None]
    q_e = theta['Q_E'][:, None]
    q_se = theta['Q_SE'][:, None]
    c_e = theta['C_E'][:, None]
    c_se = theta['C_SE'][:, None]
    p_e = event_probabilities(theta)
    p_se = np.column_stack([np.full(len(theta), side_effect_1), theta['P_SE2'], theta['P_SE3']])
    c_t = np.column_stack([np.full(len(theta), treatment_cost_1), theta['C_T2'], theta['C_T3']])

    life_after_event = life * (1.0 + q_e) / 2.0
    return (
        p_se * p_e * (lam * (life_after_event - q_se) - (c_se + c_e))
        + p_se * (1.0 - p_e) * (lam * (life - q_se) - c_se)
        + (1.0 - p_se) * p_e * (lam * life_after_event - c_e)
        + (1.0 - p_se) * (1.0 - p_e) * lam * life
        - c_t
    )


def case_net_benefit(d, theta, willingness_to_pay=75_000.0):
    """f_d(theta) con d en {1, 2, 3}."""
    if d not in (1, 2, 3):
        raise ModelError(f"El tratamiento debe ser 1, 2 o 3, no {d}")
    return case_net_benefits(theta, willingness_to_pay)[:, d - 1]


class CaseStudyModel(ChannelModel):
    """Prior de 12 parámetros con los canales del escenario elegido (ninguno = solo EVPI)."""

    decision_count = 3

    def __init__(self, scenario=None, config=None, patients=None):
        config = config or load_model_config()
        registry, blocks = build_prior(config)
        if scenario is not None and not isinstance(scenario, Scenario):
            scenario = build_scenario(scenario, config, patients)
        self.scenario = scenario
        self.willingness_to_pay = float(config['willingness_to_pay'])
        self.treatment_cost_1 = float(config['constants']['C_T1'])
        self.side_effect_1 = float(config['constants']['P_SE1'])
        self.population = PopulationSpec(**config['population'])
        channels = scenario.channels if scenario else ()
        plan = ImportancePlan(registry, blocks, channels) if channels else None
        super().__init__(registry, blocks, channels, importance_plan=plan)

    def net_benefits(self, theta):
        return case_net_benefits(theta, self.willingness_to_pay, self.treatment_cost_1, self.side_effect_1)

    @cached_property
    def f_max(self):
        value = calibrate_f_max(
            self, F_MAX_CALIBRATION_SAMPLES, RandomSource(F_MAX_CALIBRATION_SEED, (0xF3A,))
        )
        logger.debug("F_max calibrado: %.1f", value)
        return value


# --- POBLACIÓN Y ENBS ---
@dataclass(frozen=True)
class PopulationSpec:
    annual_population: float = 2500
    horizon_years: int = 10
    discount_factor: float = 1.035
    total_discounted_population: float = 21519

    def __post_init__(self):
        if not self.total_discounted_population > 0:
            raise ModelError("La población descontada debe ser positiva")

    @classmethod
    def from_first_principles(cls, annual_population=2500, horizon_years=10, discount_factor=1.035, first_year=0):
        total = discounted_population(annual_population, horizon_years, discount_factor - 1.0, first_year)
        return cls(annual_population, horizon_years, discount_factor, total)


def discounted_population(annual, years, rate, first_year=0):
    """sum_{t} annual / (1 + rate)^t para t = first_year .. first_year + years - 1."""
    t = np.arange(first_year, first_year + years)
    return float(np.sum(annual / (1.0 + rate) ** t))


def population_evsi(per_person_evsi, pop=None):
    pop = pop or PopulationSpec()
    return per_person_evsi * pop.total_discounted_population


def enbs(population_evsi, study_cost):
    return population_evsi - study_cost
