from django.apps import AppConfig

class RelaxationConfig(AppConfig):
    name = "relaxation"
    verbose_name = "Non-Markovian relaxation"
