"""Jerarquía de errores del motor EVSI.

Los comandos de administración traducen estas excepciones a CommandError con
el código de salida correspondiente; el motor nunca termina el proceso.
"""


class EvsiError(Exception):
    """Base de todos los errores del proyecto."""


class DistributionError(EvsiError, ValueError):
    """Parámetros de distribución inválidos o covarianza no definida positiva."""


class ModelError(EvsiError, ValueError):
    """Índice de decisión, dimensión de observación o escenario inválidos."""


class ImportanceSamplingError(EvsiError):
    """Combinación de canal y prior sin distribución de importancia soportada."""


class DegenerateLikelihoodError(EvsiError):
    """Todos los pesos internos son cero (log-pesos = -inf) para un Y dado."""

    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class RateRegressionError(EvsiError, ValueError):
    """Menos de dos niveles utilizables para estimar alpha y beta."""


class ConfigError(EvsiError, ValueError):
    """Configuración del motor o de la corrida inválida."""


class ExportError(EvsiError):
    """No se pudo escribir un archivo de resultados."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
