"""
Django settings for the leanviz project.

leanviz runs as a set of management commands (no HTTP surface), so only the
pieces the commands rely on are configured here: installed apps, cache,
logging and the estimator defaults read from the environment.

For more information on this file, see
https://docs.djangoproject.com/en/5.2/topics/settings/
"""

from dotenv import load_dotenv
import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Choose which .env file to load
ENV_FILE = os.getenv("ENV_FILE", ".env")

# Load .env from project root
load_dotenv(dotenv_path=os.path.join(BASE_DIR, ENV_FILE))

SECRET_KEY: str = os.getenv("SECRET_KEY", "leanviz-cli-not-served")
DEBUG = os.getenv("DEBUG", "False") == "True"

ALLOWED_HOSTS: list[str] = []

# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "valuation",
]

# No database: every command works on files.
DATABASES: dict = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Estimator defaults (overridable per run through --config and CLI flags)
LEANVIZ_THREADS = int(os.getenv("LEANVIZ_THREADS", os.cpu_count() or 1))
LEANVIZ_QUADRATURE_POINTS = int(os.getenv("LEANVIZ_QUADRATURE_POINTS", 2**14))
LEANVIZ_MAX_ITERS = int(os.getenv("LEANVIZ_MAX_ITERS", 500))
LEANVIZ_GRAD_TOL = float(os.getenv("LEANVIZ_GRAD_TOL", 1e-6))
LEANVIZ_MIN_ENTROPY = float(os.getenv("LEANVIZ_MIN_ENTROPY", -8.0))
LEANVIZ_MAX_BLOCKS = int(os.getenv("LEANVIZ_MAX_BLOCKS", 32))
LEANVIZ_MIN_BLOCK_ROWS = int(os.getenv("LEANVIZ_MIN_BLOCK_ROWS", 50))
LEANVIZ_METHOD = os.getenv("LEANVIZ_METHOD", "mind")
LEANVIZ_FEATURE_MAP = os.getenv("LEANVIZ_FEATURE_MAP", "mixed_scores")
LEANVIZ_SEED = int(os.getenv("LEANVIZ_SEED", 0))
LEANVIZ_CACHE_TIMEOUT = int(os.getenv("LEANVIZ_CACHE_TIMEOUT", 3600))

# Cache configuration (mutual-information estimates keyed by column set)
if os.getenv("REDIS_URL"):
    CACHES = {
        "default": {
            "BACKEND": "django.core.cache.backends.redis.RedisCache",
            "LOCATION": os.getenv("REDIS_URL"),
            "TIMEOUT": LEANVIZ_CACHE_TIMEOUT,
        }
    }
else:
    CACHES = {
        "default": {
            "BACKEND": "django.core.cache.backends.locmem.LocMemCache",
            "TIMEOUT": LEANVIZ_CACHE_TIMEOUT,
        }
    }

# Test settings
TEST_RUNNER = "django.test.runner.DiscoverRunner"

# Logs go to stderr so that stdout only carries reports.
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": os.getenv("LEANVIZ_LOG_LEVEL", "WARNING"),
    },
}
