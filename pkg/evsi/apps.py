from django.apps import AppConfig


class EvsiConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'evsi'
    verbose_name = 'Valor esperado de la información muestral'
