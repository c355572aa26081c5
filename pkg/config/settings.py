"""
Django settings for the skyrelay simulation project.

Only process-level knobs live here (logging, batch dispatch, celery broker).
Physical and numerical parameters come from the YAML parameter document
(see configs/table1.yaml) or from management-command flags.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Do NOT override existing env vars (e.g. from a batch scheduler).
load_dotenv(BASE_DIR / ".env")  # no override=True


SECRET_KEY = os.getenv("SECRET_KEY", "dev-secret-change-me")

DEBUG = os.getenv("DEBUG", "0") == "1"

ALLOWED_HOSTS = ["localhost", "127.0.0.1"]


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "skyrelay.apps.SkyrelayConfig",
]

# The simulator has no models; nothing is persisted beyond output files.
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# ---------------------------------------------------
# Simulation runtime
# ---------------------------------------------------

# Parameter document used without --config; not overridable from the environment.
SKYRELAY_DEFAULT_CONFIG = str(BASE_DIR / "configs" / "table1.yaml")

# "inline" runs trial batches in-process; "celery" fans them out to workers.
SKYRELAY_DISPATCH = os.getenv("SKYRELAY_DISPATCH", "inline").strip().lower()

SKYRELAY_BATCH_SIZE = int(os.getenv("SKYRELAY_BATCH_SIZE", "50"))


CELERY_BROKER_URL = os.getenv("CELERY_BROKER_URL", "redis://127.0.0.1:6379/0")
CELERY_RESULT_BACKEND = os.getenv("CELERY_RESULT_BACKEND", CELERY_BROKER_URL)

CELERY_ACCEPT_CONTENT = ["json"]
CELERY_TASK_SERIALIZER = "json"
CELERY_RESULT_SERIALIZER = "json"
CELERY_TIMEZONE = TIME_ZONE


# ---------------------------------------------------
# Logging
# ---------------------------------------------------

LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "root": {"handlers": ["console"], "level": "WARNING"},
    "loggers": {
        "skyrelay": {
            "handlers": ["console"],
            "level": LOG_LEVEL,
            "propagate": False,
        },
    },
}
