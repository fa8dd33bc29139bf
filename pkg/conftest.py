"""Configura Django para que pytest pueda recolectar las pruebas de evsi."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'evsiBack.settings')
django.setup()
