from django.apps import AppConfig

class StateOpsConfig(AppConfig):
    name = "stateops"
    verbose_name = "Two-level state algebra"
