# -*- coding: utf-8 -*-
"""Escritura de las tablas de resultados (un archivo por panel) en CSV o JSON.

Los CSV usan 17 cifras significativas para que `pandas.read_csv` recupere
exactamente los valores en memoria. Los metadatos de la corrida (tiempo de
reloj incluido) van siempre a un JSON aparte.
"""

import logging
from pathlib import Path

import pandas as pd
from rest_framework.renderers import JSONRenderer

from .exceptions import ExportError

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = '%.17g'


def serialize_rows(serializer_class, rows):
    """Filas (dicts u objetos) con la forma del serializador, en el orden de sus campos."""
    return [dict(row) for row in serializer_class(rows, many=True).data]


def rows_to_frame(serializer_class, rows):
    columns = list(serializer_class().fields)
    return pd.DataFrame(serialize_rows(serializer_class, rows), columns=columns)


def ensure_output_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"No se pudo crear la carpeta de salida {path}: {exc}", path) from exc
    return path


def _write_bytes(path, content):
    try:
        path.write_bytes(content)
    except OSError as exc:
        raise ExportError(f"No se pudo escribir {path}: {exc}", path) from exc


def write_table(serializer_class, rows, prefix, panel, fmt='csv'):
    """Escribe `<prefix>_<panel>.<fmt>` y devuelve la ruta."""
    path = Path(f"{prefix}_{panel}.{fmt}")
    if fmt == 'csv':
        frame = rows_to_frame(serializer_class, rows)
        _write_bytes(path, frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT).encode('utf-8'))
    elif fmt == 'json':
        payload = {'panel': panel, 'rows': serialize_rows(serializer_class, rows)}
        _write_bytes(path, JSONRenderer().render(payload))
    else:
        raise ExportError(f"Formato de salida desconocido: {fmt}", path)
    logger.info("💾 Archivo escrito: %s", path)
    return path


def write_metadata(serializer_class, metadata, prefix):
    path = Path(f"{prefix}_metadata.json")
    data = serializer_class(metadata).data
    _write_bytes(path, JSONRenderer().render(data))
    logger.info("💾 Metadatos escritos: %s", path)
    return path


def read_table(path):
    """Lee un CSV escrito por write_table (usado para verificar el ida y vuelta)."""
    return pd.read_csv(path, float_precision='round_trip')
