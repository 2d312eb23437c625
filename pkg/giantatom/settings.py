from pathlib import Path
import os

BASE_DIR = Path(__file__).resolve().parent.parent

# ---------- БАЗОВЫЕ НАСТРОЙКИ ----------

SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY",
    "dev-secret-change-me"  # веб-части нет, ключ нужен только самому Django
)

DEBUG = os.environ.get("DJANGO_DEBUG", "False").lower() == "true"

ALLOWED_HOSTS: list[str] = []

# ---------- ПРИЛОЖЕНИЯ ----------

INSTALLED_APPS = [
    "rest_framework",
    "landscape.apps.LandscapeConfig",
    "relaxation.apps.RelaxationConfig",
    "stateops.apps.StateOpsConfig",
    "driven.apps.DrivenConfig",
    "sweeps.apps.SweepsConfig",
]

# Таблиц у симулятора нет, DATABASES не задаём.

LANGUAGE_CODE = "ru-ru"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

# ---------- ЛОГИ ----------

GIANT_ATOM_LOG_LEVEL = os.environ.get("GIANT_ATOM_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        app: {"handlers": ["console"], "level": GIANT_ATOM_LOG_LEVEL, "propagate": False}
        for app in ("landscape", "relaxation", "stateops", "driven", "sweeps")
    },
}

# ---------- GIANT ATOM ----------

# Дефолты модели: T = 125 нс, β = 0.78, γ_in/2π ≈ 0.07 МГц около 4.9 ГГц.
# Любой ключ переопределяется env-переменной GIANT_ATOM__<СЕКЦИЯ>__<КЛЮЧ>.
GIANT_ATOM = {
    "landscape": {
        "gamma_peak_mhz": 0.6,
        "omega_center_ghz": 5.0,
        "n_pairs": 5,
        "beta": 0.78,
        "delay_t_ns": 125.0,
        "gamma_in_c0_mhz": -0.004,
        "gamma_in_slope": 1.5e-5,
        "band_lo_ghz": 1.5,
        "band_hi_ghz": 5.5,
    },
    "solver": {
        "dt_ns": 0.125,
        "n_modes": 4000,
        "bandwidth_mhz": 1000.0,
        "convention": "amplitude_half_rates",
        "secular": False,
        "seed": 42,
        "threads": 1,
        "relax_solver": "series",
        "t_max_ns": 1000.0,
        "extra_dephasing_mhz": 0.0,
        "shots": 0,
        "time_samples": 256,
    },
    "drive": {
        "qubit_ghz": 4.891,
        "omega_mhz": 2.5,
        "delta_mhz": 0.0,
        "duration_us": 3.8,
    },
    "sweep": {
        "preset": "",
        "quantities": ["gamma_eff"],
        # оси сетки: имя несёт единицу (qubit_ghz, omega_mhz, delta_mhz, t_ns), пустое имя: оси нет
        "x.name": "qubit_ghz",
        "x.start": 4.885,
        "x.stop": 4.895,
        "x.count": 1001,
        "y.name": "",
        "y.start": 0.0,
        "y.stop": 0.0,
        "y.count": 1,
    },
}

GIANT_ATOM_ENV_PREFIX = "GIANT_ATOM__"
