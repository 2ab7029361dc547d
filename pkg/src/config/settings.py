"""
Django settings for the logistic PCA workbench.

There is no web surface: Django provides the management-command CLI, the
settings/env layer and the ORM ledger for recorded fits and sweeps.
"""

from pathlib import Path
import os
from urllib.parse import urlparse

from dotenv import load_dotenv


BASE_DIR = Path(__file__).resolve().parent.parent

# Secrets may contain '$'; keep python-dotenv from interpolating them.
load_dotenv(BASE_DIR / ".env", override=False, interpolate=False)


def env_bool(name: str, default: bool = False) -> bool:
    val = os.getenv(name)
    if val is None:
        return default
    return val.strip().lower() in {"1", "true", "yes", "on"}


def env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    return int(raw) if raw else default


def env_float(name: str, default: float) -> float:
    raw = os.getenv(name, "").strip()
    return float(raw) if raw else default


def env_list(name: str, default: list[str] | None = None) -> list[str]:
    raw = os.getenv(name, "")
    if not raw.strip():
        return default or []
    return [x.strip() for x in raw.split(",") if x.strip()]


# Nothing is signed (no sessions, no forms); Django still requires a value.
SECRET_KEY = os.getenv("SECRET_KEY", "lpca-local-only")

DEBUG = env_bool("DEBUG", default=False)
ALLOWED_HOSTS: list[str] = []

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "lpca",
]

MIDDLEWARE: list[str] = []


# Database
# DATABASE_URL first, then DB_* (docker postgres), else a local SQLite ledger.
DATABASE_URL = os.getenv("DATABASE_URL")
if DATABASE_URL:
    u = urlparse(DATABASE_URL)
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.postgresql",
            "NAME": (u.path or "").lstrip("/"),
            "USER": u.username,
            "PASSWORD": u.password,
            "HOST": u.hostname,
            "PORT": u.port or 5432,
            "CONN_MAX_AGE": int(os.getenv("DB_CONN_MAX_AGE", "60")),
        }
    }
elif os.getenv("DB_HOST"):
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.postgresql",
            "NAME": os.getenv("DB_NAME", "lpca"),
            "USER": os.getenv("DB_USER", "lpca"),
            "PASSWORD": os.getenv("DB_PASSWORD", "lpca"),
            "HOST": os.getenv("DB_HOST"),
            "PORT": os.getenv("DB_PORT", "5432"),
            "CONN_MAX_AGE": int(os.getenv("DB_CONN_MAX_AGE", "60")),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.sqlite3",
            "NAME": os.getenv("LPCA_DB_PATH", str(BASE_DIR / "lpca.sqlite3")),
        }
    }

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True


# -----------------------------
# Solver defaults (command flag defaults; services take explicit arguments)
# -----------------------------
LPCA_MAX_ITER = env_int("LPCA_MAX_ITER", 1000)
LPCA_TOL = env_float("LPCA_TOL", 1e-5)
LPCA_DEFAULT_SEED = env_int("LPCA_DEFAULT_SEED", 0)
LPCA_THREADS = env_int("LPCA_THREADS", 1)
LPCA_GAMMA = env_float("LPCA_GAMMA", 0.9)
LPCA_M_GRID = [float(x) for x in env_list("LPCA_M_GRID", default=[str(0.5 * i) for i in range(1, 11)])]


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "root": {
        "handlers": ["console"],
        "level": os.getenv("LOG_LEVEL", "WARNING"),
    },
    "loggers": {
        "lpca": {
            "handlers": ["console"],
            "level": os.getenv("LPCA_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}
