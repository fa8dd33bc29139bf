import os
from datetime import datetime
from pathlib import Path

# Rutas del proyecto: BASE_DIR / 'subcarpeta'
BASE_DIR = Path(__file__).resolve().parent.parent

# Cargar .env si python-dotenv está disponible. Buscamos en el proyecto
try:
    from dotenv import load_dotenv
    env_path = BASE_DIR / '.env'
    if not env_path.exists():
        # también mirar en la carpeta padre por si el .env está arriba
        env_path = BASE_DIR.parent / '.env'
    if env_path.exists():
        load_dotenv(env_path)
except Exception:
    # Si python-dotenv no está instalado, seguiremos leyendo desde os.environ
    pass


# SECURITY: el proyecto no expone HTTP, pero Django exige una clave
SECRET_KEY = os.environ.get('SECRET_KEY', 'evsi-solo-linea-de-comandos')

# DEBUG desde ENV (string 'True'/'False'), por defecto False para corridas largas
DEBUG = os.environ.get('DEBUG', 'False').lower() in ['1', 'true', 'yes']

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',  # serializadores de configuración y resultados
    'evsi',
]

# Sin base de datos: los resultados se escriben como archivos CSV/JSON
DATABASES = {}

USE_TZ = True
TIME_ZONE = 'America/Asuncion'
LANGUAGE_CODE = 'es-py'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# --- CONFIGURACIÓN DEL MOTOR EVSI (desde variables de entorno) ---
def _env_int(name, default):
    value = os.environ.get(name, '')
    return int(value) if value.strip() else default


EVSI = {
    'M0': _env_int('EVSI_M0', 16),
    'SEED': _env_int('EVSI_SEED', 20190101),
    # None = todos los núcleos disponibles
    'THREADS': _env_int('EVSI_THREADS', 0) or None,
    'OUTPUT_DIR': os.environ.get('EVSI_OUTPUT_DIR', str(BASE_DIR / 'resultados')),
    'FORMAT': os.environ.get('EVSI_FORMAT', 'csv'),
    'MODEL_CONFIG': os.environ.get(
        'EVSI_MODEL_CONFIG', str(BASE_DIR / 'evsi' / 'data' / 'case_study.json')
    ),
    'INITIAL_SAMPLES': _env_int('EVSI_INITIAL_SAMPLES', 100),
    'MAX_LEVEL': _env_int('EVSI_MAX_LEVEL', 16),
    'RETRY_CAP': _env_int('EVSI_RETRY_CAP', 100),
    'EVPI_SAMPLES': _env_int('EVSI_EVPI_SAMPLES', 1_000_000),
}


# --- LOGGING: consola + archivo de seguimiento por corrida ---
LOG_DIR = Path(os.environ.get('EVSI_LOG_DIR', BASE_DIR / 'logs'))
_log_handlers = ['console']
try:
    LOG_DIR.mkdir(parents=True, exist_ok=True)
    LOG_FILE = LOG_DIR / f"evsi_run_{datetime.now().strftime('%Y%m%d_%H%M%S')}.txt"
    _log_handlers.append('run_file')
except OSError:
    # Si no podemos crear la carpeta de logs, seguimos solo con consola
    LOG_FILE = None

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {'format': '%(asctime)s %(levelname)s %(name)s: %(message)s'},
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
            'level': os.environ.get('EVSI_LOG_LEVEL', 'INFO'),
        },
        **({
            'run_file': {
                'class': 'logging.FileHandler',
                'filename': str(LOG_FILE),
                'encoding': 'utf-8',
                'delay': True,
                'formatter': 'simple',
            },
        } if LOG_FILE else {}),
    },
    'loggers': {
        'evsi': {
            'handlers': _log_handlers,
            'level': 'DEBUG',
            'propagate': False,
        },
    },
}
