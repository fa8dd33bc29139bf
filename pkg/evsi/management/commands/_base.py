# -*- coding: utf-8 -*-
"""Base común de los comandos EVSI: flags, archivo de configuración y salida.

Precedencia de la configuración (de menor a mayor):
settings.EVSI -> archivo --config (formato .env) -> flags explícitos.

Códigos de salida: 0 éxito, 1 error de uso / validación / E/S, 2 resultado
no convergido (los archivos se escriben igual).
"""

import sys
import time
from datetime import datetime
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from dotenv import dotenv_values

from evsi.case_study import CaseStudyModel, load_model_config
from evsi.distributions import RandomSource
from evsi.exceptions import EvsiError
from evsi.export import ensure_output_dir, write_metadata, write_table
from evsi.mlmc import MlmcConfig
from evsi.serializers import RunConfigSerializer, RunMetadataSerializer
from evsi.toy import BernoulliToyModel

EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

# Claves del archivo --config -> nombre de la opción
CONFIG_FILE_KEYS = {
    'EVSI_SCENARIO': 'scenario',
    'EVSI_EPS': 'eps',
    'EVSI_M0': 'm0',
    'EVSI_SEED': 'seed',
    'EVSI_SAMPLES': 'samples',
    'EVSI_LEVELS': 'levels',
    'EVSI_NO_IS': 'no_is',
    'EVSI_FORMAT': 'format',
    'EVSI_OUT': 'out',
    'EVSI_THREADS': 'threads',
    'EVSI_EVPI_SAMPLES': 'evpi_samples',
}

# Flujos aleatorios por tarea: (tarea, índice)
STREAM_MLMC = 0
STREAM_EVPI = 1
STREAM_NESTED = 2


def _flag_list(values):
    """--eps 2 5 10 o --eps 2,5,10."""
    if values is None:
        return None
    return ','.join(str(v) for v in values)


class EvsiBaseCommand(BaseCommand):
    default_samples = None
    default_levels = None
    default_eps = '2'

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)

        def error(message):
            # argparse sale con 2 por defecto; aquí el error de uso es 1
            if parser.called_from_command_line:
                parser.print_usage(sys.stderr)
                parser.exit(EXIT_ERROR, f"{parser.prog}: error: {message}\n")
            raise CommandError(f"Error: {message}", returncode=EXIT_ERROR)

        parser.error = error
        return parser

    def add_arguments(self, parser):
        parser.add_argument('--scenario', help="Escenario: 1, 2, 3 o toy")
        parser.add_argument('--eps', nargs='+', help="Precisión RMS objetivo (lista)")
        parser.add_argument('--m0', type=int, help="Muestras internas del nivel 0 (M0)")
        parser.add_argument('--seed', type=int, help="Semilla de 64 bits")
        parser.add_argument('--samples', type=int, help="Muestras externas por nivel / corrida")
        parser.add_argument('--levels', type=int, help="Último nivel l a evaluar")
        parser.add_argument('--no-is', dest='no_is', action='store_true', default=None,
                            help="Muestrear las muestras internas del prior (sin importancia)")
        parser.add_argument('--format', choices=['csv', 'json'], help="Formato de salida")
        parser.add_argument('--out', help="Carpeta de salida")
        parser.add_argument('--threads', type=int, help="Hilos de trabajo (por defecto, todos los núcleos)")
        parser.add_argument('--config', help="Archivo .env con cualquiera de los flags (EVSI_*)")
        parser.add_argument('--evpi-samples', dest='evpi_samples', type=int,
                            help="Muestras de Monte Carlo para el EVPI")

    # --- CONFIGURACIÓN ---
    def _defaults(self):
        evsi = settings.EVSI
        return {
            'scenario': '1',
            'eps': self.default_eps,
            'm0': evsi['M0'],
            'seed': evsi['SEED'],
            'samples': self.default_samples,
            'levels': self.default_levels,
            'no_is': False,
            'format': evsi['FORMAT'],
            'out': str(evsi['OUTPUT_DIR']),
            'threads': evsi['THREADS'],
            'evpi_samples': evsi['EVPI_SAMPLES'],
        }

    def _file_values(self, path):
        if not path:
            return {}
        if not Path(path).is_file():
            raise CommandError(f"❌ Archivo de configuración no encontrado: {path}", returncode=EXIT_ERROR)
        values = dotenv_values(path)
        return {
            CONFIG_FILE_KEYS[key]: value
            for key, value in values.items()
            if key in CONFIG_FILE_KEYS and value not in (None, '')
        }

    def resolve_config(self, options):
        merged = self._defaults()
        merged.update(self._file_values(options.get('config')))
        flags = {name: options.get(name) for name in CONFIG_FILE_KEYS.values()}
        flags['eps'] = _flag_list(flags['eps'])
        merged.update({name: value for name, value in flags.items() if value is not None})
        merged['command'] = self.command_name

        serializer = RunConfigSerializer(data=merged)
        if not serializer.is_valid():
            raise CommandError(f"❌ Configuración inválida: {dict(serializer.errors)}", returncode=EXIT_ERROR)
        return dict(serializer.validated_data)

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def build_model(self, config):
        if config['scenario'] == 'toy':
            return BernoulliToyModel()
        return CaseStudyModel(int(config['scenario']), config=load_model_config(settings.EVSI['MODEL_CONFIG']))

    def mlmc_config(self, config, eps):
        evsi = settings.EVSI
        return MlmcConfig(
            eps=eps,
            m0=config['m0'],
            seed=config['seed'],
            threads=config['threads'],
            use_importance_sampling=not config['no_is'],
            initial_samples_per_level=evsi['INITIAL_SAMPLES'],
            max_level=evsi['MAX_LEVEL'],
            retry_cap=evsi['RETRY_CAP'],
        )

    def random_source(self, config, *keys):
        return RandomSource(config['seed']).stream(*keys)

    def output_prefix(self, config):
        folder = ensure_output_dir(config['out'])
        return folder / f"{self.command_name}_scenario{config['scenario']}"

    def write(self, serializer_class, rows, prefix, panel, config):
        path = write_table(serializer_class, rows, prefix, panel, config['format'])
        self.stdout.write(f"💾 {path}")
        return path

    # --- EJECUCIÓN ---
    def handle(self, *args, **options):
        config = self.resolve_config(options)
        started_at = datetime.now().isoformat(timespec='seconds')
        start = time.perf_counter()
        try:
            outcome = self.run(config)
            prefix = self.output_prefix(config)
            write_metadata(RunMetadataSerializer, {
                'command': self.command_name,
                'config': {key: value for key, value in config.items()},
                'started_at': started_at,
                'wall_time_seconds': time.perf_counter() - start,
                'model_evaluations': outcome.get('model_evaluations', 0),
                'converged': outcome.get('converged', True),
            }, prefix)
        except EvsiError as exc:
            raise CommandError(f"❌ {exc}", returncode=EXIT_ERROR) from exc
        except OSError as exc:
            raise CommandError(f"❌ Error de E/S en {getattr(exc, 'filename', '?')}: {exc}",
                               returncode=EXIT_ERROR) from exc

        if not outcome.get('converged', True):
            raise CommandError("⚠️ Al menos una corrida no convergió (archivos escritos igualmente)",
                               returncode=EXIT_NOT_CONVERGED)

    def run(self, config):
        """Ejecuta el comando y devuelve {'converged': bool, 'model_evaluations': int}."""
        raise NotImplementedError
