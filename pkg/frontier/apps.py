from django.apps import AppConfig


class FrontierConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'frontier'
    verbose_name = 'Multiobjective bilevel analysis'
